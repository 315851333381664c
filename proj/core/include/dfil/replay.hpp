#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "dfil/datasets.hpp"
#include "dfil/model.hpp"
#include "dfil/rng.hpp"
#include "dfil/tensor.hpp"

namespace dfil {

// How the per-task replay contribution is chosen. The per-class budget is
// K/2 for every strategy; HardCenter splits it into K/4 highest-entropy and
// K/4 most-central samples per class.
enum class ReplayStrategy {
  HardCenter,  // high-entropy + near-centroid, the default
  AllHard,     // entropy descending
  AllEasy,     // entropy ascending
  AllMargin,   // centroid distance descending
  AllCenter,   // centroid distance ascending
  Random,      // class-balanced uniform without replacement
};

std::string to_string(ReplayStrategy s);
ReplayStrategy replay_strategy_from_string(const std::string& s);

// A sample scored by the model that just finished training on its task.
struct ScoredSample {
  std::size_t index = 0;  // position in the source dataset
  int label = 0;
  double entropy = 0.0;            // in [0, ln 2] for two classes
  double centroid_distance = 0.0;  // Euclidean to its class centroid
};

// One replayed sample plus selection provenance for the audit CSV.
struct ReplayEntry {
  Tensor input;  // length d
  int label = 0;
  std::size_t task_id = 0;      // task it was selected from (1-based)
  std::size_t source_index = 0; // row in that task's training set
  double entropy = 0.0;
  double centroid_distance = 0.0;
  std::string criterion;  // hard|center|both|backfill|<strategy name>
};

// Accumulated replay memory. Grows by exactly K entries per completed task
// and never evicts.
class ReplaySet {
 public:
  void add_task_selection(std::vector<ReplayEntry> entries);
  const std::vector<ReplayEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<ReplayEntry> entries_;
};

// Natural-log information entropy of a probability vector. Components must
// be >= 0 and sum to 1 within 1e-9; zero components contribute 0.
double entropy(const Tensor& p);

// Per-class arithmetic means of the feature rows.
// Returns (centroid of class 0, centroid of class 1).
std::pair<Tensor, Tensor> class_centroids(const Tensor& features,
                                          const std::vector<int>& labels);

// Scores every sample of the dataset under the model (entropy of the T=1
// prediction, distance to its class centroid in feature space).
std::vector<ScoredSample> score_samples(const Model& model,
                                        const Dataset& task_data);

// Selects exactly K samples from the task's training data using the model
// that was just trained on it. K must be a positive multiple of 4 and each
// class must contain at least K/2 samples. Ties break toward the lower
// dataset index; Random draws from the given rng.
std::vector<ReplayEntry> select_replay(const Model& model,
                                       const Dataset& task_data, std::size_t k,
                                       ReplayStrategy strategy,
                                       std::size_t task_id, Rng& rng);

// Audit export: sample_id,label,task_id,entropy,centroid_distance,criterion.
void write_replay_csv(const std::vector<ReplayEntry>& entries,
                      const std::filesystem::path& path);

}  // namespace dfil
