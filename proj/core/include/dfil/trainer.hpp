#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfil/datasets.hpp"
#include "dfil/losses.hpp"
#include "dfil/metrics.hpp"
#include "dfil/model.hpp"
#include "dfil/replay.hpp"

namespace dfil {

enum class Method { Dfil, Finetune, Offline, Er, Lwf };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t epochs_per_task = 20;
  std::size_t batch_size = 32;
  double learning_rate = 5e-4;
  // Learning rate decays by lr_decay_factor every lr_decay_every epochs; the
  // epoch counter resets at each task boundary.
  double lr_decay_factor = 0.5;
  std::size_t lr_decay_every = 5;
  AdamConfig adam;
  LossWeights weights;
  LossOptions loss_options;
  std::size_t replay_size = 40;  // K: samples added to the replay set per task
  ReplayStrategy strategy = ReplayStrategy::HardCenter;
  bool use_replay = true;  // false reproduces the no-replay ablation
  bool carry_optimizer_state = false;  // keep Adam moments across tasks
  std::uint64_t seed = 0;
  Method method = Method::Dfil;
  ModelConfig model;  // input_dim is taken from the data

  void validate() const;
};

// Strict JSON (de)serialization; unknown keys are rejected so config typos
// fail loudly instead of silently using defaults.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

struct LossLogRow {
  std::size_t task = 1;   // 1-based
  std::size_t epoch = 1;  // 1-based
  std::size_t batch = 1;  // 1-based
  double ce = 0.0;
  std::optional<double> scl, kd, fd;  // absent when the method skips the term
  double total = 0.0;
};

struct RunRecord {
  TrainConfig config;
  std::vector<std::string> task_names;
  // Incremental methods fill the triangular matrix; Offline trains once and
  // fills per-task accuracies of that single model instead.
  AccuracyMatrix matrix;
  bool offline = false;
  std::vector<double> offline_accuracies;
  std::vector<LossLogRow> losses;
  std::vector<std::vector<ReplayEntry>> replay_selections;  // one per task
  std::vector<Model> checkpoints;  // model after each training stage
};

struct SummaryBoundary {
  std::size_t after_task = 1;
  double aa = 0.0;
  std::optional<double> af;  // undefined after the first task
};
std::vector<SummaryBoundary> summarize(const RunRecord& record);

// Instrumentation hooks; every callback fires after the named step completes.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_batch_end(std::size_t task, std::size_t epoch,
                            std::size_t batch, const Model& student,
                            const Model* teacher,
                            const LossLogRow& losses) {
    (void)task; (void)epoch; (void)batch;
    (void)student; (void)teacher; (void)losses;
  }
  virtual void on_epoch_end(std::size_t task, std::size_t epoch,
                            const Model& student, const Model* teacher) {
    (void)task; (void)epoch; (void)student; (void)teacher;
  }
  virtual void on_task_end(std::size_t task, const Model& model,
                           const ReplaySet& replay) {
    (void)task; (void)model; (void)replay;
  }
};

// ---- optimizer ---------------------------------------------------------------

struct AdamState {
  std::vector<double> m, v;
  std::size_t step = 0;

  static AdamState zeros(std::size_t n) {
    return AdamState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                     0};
  }
};

// One bias-corrected Adam update, in place. Non-finite gradients abort.
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr, const AdamConfig& cfg = {});

// Learning rate at a 0-based epoch within a task:
// learning_rate * lr_decay_factor^(epoch / lr_decay_every).
double effective_lr(const TrainConfig& cfg, std::size_t epoch);

// ---- training protocols ---------------------------------------------------------

// Dispatches on cfg.method.
RunRecord run_training(const TaskSequence& sequence, const TrainConfig& cfg,
                       TrainObserver* observer = nullptr);

// The incremental loop: per-task epochs over the task data merged with the
// replay set, teacher snapshot between tasks, hard+center replay selection
// after each task. Requires cfg.method == Dfil.
RunRecord run_dfil(const TaskSequence& sequence, const TrainConfig& cfg,
                   TrainObserver* observer = nullptr);

// Finetune, Offline, ER, LWF. Requires cfg.method to be one of those.
RunRecord run_baseline(const TaskSequence& sequence, const TrainConfig& cfg,
                       TrainObserver* observer = nullptr);

// ---- evaluation -------------------------------------------------------------

// Argmax over the T=1 probabilities; an exact tie resolves to class 0.
std::vector<int> predict(const Model& model, const Tensor& inputs);
double evaluate_accuracy(const Model& model, const Dataset& data);

// ---- run-record persistence ----------------------------------------------------

// Writes config.json, accuracy_matrix.csv, losses.csv, replay_task<i>.csv,
// model_task<i>.dfil (model_offline.dfil for Offline) and summary.json.
void save_run_record(const RunRecord& record,
                     const std::filesystem::path& dir);

// What a run directory contains, as written by save_run_record.
struct RunDirData {
  std::string config_text;
  std::vector<std::string> task_names;
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> acc_rows;  // ragged (triangular) or 1 x N
  std::vector<LossLogRow> loss_rows;
  std::string summary_text;
};
RunDirData load_run_dir(const std::filesystem::path& dir);

}  // namespace dfil
