#include "dfil/replay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "dfil/errors.hpp"

namespace dfil {

std::string to_string(ReplayStrategy s) {
  switch (s) {
    case ReplayStrategy::HardCenter: return "hard_center";
    case ReplayStrategy::AllHard: return "all_hard";
    case ReplayStrategy::AllEasy: return "all_easy";
    case ReplayStrategy::AllMargin: return "all_margin";
    case ReplayStrategy::AllCenter: return "all_center";
    case ReplayStrategy::Random: return "random";
  }
  return "hard_center";
}

ReplayStrategy replay_strategy_from_string(const std::string& s) {
  if (s == "hard_center" || s == "ours") return ReplayStrategy::HardCenter;
  if (s == "all_hard") return ReplayStrategy::AllHard;
  if (s == "all_easy") return ReplayStrategy::AllEasy;
  if (s == "all_margin") return ReplayStrategy::AllMargin;
  if (s == "all_center") return ReplayStrategy::AllCenter;
  if (s == "random") return ReplayStrategy::Random;
  throw ParameterError("unknown replay strategy: " + s);
}

void ReplaySet::add_task_selection(std::vector<ReplayEntry> entries) {
  std::set<std::size_t> seen;
  for (const ReplayEntry& e : entries) {
    if (!seen.insert(e.source_index).second) {
      throw SelectionError("replay set: duplicate sample " +
                           std::to_string(e.source_index) +
                           " within one task's contribution");
    }
  }
  entries_.insert(entries_.end(), std::make_move_iterator(entries.begin()),
                  std::make_move_iterator(entries.end()));
}

double entropy(const Tensor& p) {
  double total = 0.0;
  double mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = p.at(i);
    if (v < 0.0) {
      throw ParameterError("entropy: negative component " + std::to_string(v));
    }
    mass += v;
    if (v > 0.0) total -= v * std::log(v);
  }
  if (std::abs(mass - 1.0) > 1e-9) {
    throw ParameterError("entropy: probabilities sum to " +
                         std::to_string(mass) + ", expected 1");
  }
  return total;
}

std::pair<Tensor, Tensor> class_centroids(const Tensor& features,
                                          const std::vector<int>& labels) {
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw DimensionError("class_centroids: features " + features.shape_str() +
                         " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t dim = features.cols();
  Tensor centroids[2] = {Tensor::zeros({dim}), Tensor::zeros({dim})};
  std::size_t counts[2] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    counts[y] += 1;
    for (std::size_t c = 0; c < dim; ++c) {
      centroids[y].at(c) += features.at(i, c);
    }
  }
  for (int y = 0; y <= 1; ++y) {
    if (counts[y] == 0) {
      throw SelectionError("class_centroids: class " + std::to_string(y) +
                           " has no samples");
    }
    for (std::size_t c = 0; c < dim; ++c) {
      centroids[y].at(c) /= static_cast<double>(counts[y]);
    }
  }
  return {std::move(centroids[0]), std::move(centroids[1])};
}

std::vector<ScoredSample> score_samples(const Model& model,
                                        const Dataset& task_data) {
  task_data.validate();
  const BatchOutput out = model.forward_batch(task_data.inputs);
  const auto [centroid_real, centroid_fake] =
      class_centroids(out.features, task_data.labels);

  std::vector<ScoredSample> scored(task_data.size());
  for (std::size_t i = 0; i < task_data.size(); ++i) {
    ScoredSample& s = scored[i];
    s.index = i;
    s.label = task_data.labels[i];
    s.entropy = entropy(out.probs.row(i));
    const Tensor& centroid = s.label == 0 ? centroid_real : centroid_fake;
    double sq = 0.0;
    for (std::size_t c = 0; c < out.features.cols(); ++c) {
      const double d = out.features.at(i, c) - centroid.at(c);
      sq += d * d;
    }
    s.centroid_distance = std::sqrt(sq);
  }
  return scored;
}

namespace {

// Stable ranking: score order first, lower dataset index on ties.
std::vector<const ScoredSample*> ranked(
    const std::vector<const ScoredSample*>& pool, bool by_entropy,
    bool descending) {
  std::vector<const ScoredSample*> order = pool;
  std::sort(order.begin(), order.end(),
            [by_entropy, descending](const ScoredSample* a,
                                     const ScoredSample* b) {
              const double sa = by_entropy ? a->entropy : a->centroid_distance;
              const double sb = by_entropy ? b->entropy : b->centroid_distance;
              if (sa != sb) return descending ? sa > sb : sa < sb;
              return a->index < b->index;
            });
  return order;
}

struct Pick {
  const ScoredSample* sample;
  std::string criterion;
};

std::vector<Pick> pick_for_class(const std::vector<const ScoredSample*>& pool,
                                 std::size_t k, ReplayStrategy strategy,
                                 Rng& rng) {
  const std::size_t half = k / 2;
  std::vector<Pick> picks;

  switch (strategy) {
    case ReplayStrategy::AllHard: {
      auto order = ranked(pool, true, true);
      for (std::size_t i = 0; i < half; ++i) picks.push_back({order[i], "all_hard"});
      break;
    }
    case ReplayStrategy::AllEasy: {
      auto order = ranked(pool, true, false);
      for (std::size_t i = 0; i < half; ++i) picks.push_back({order[i], "all_easy"});
      break;
    }
    case ReplayStrategy::AllMargin: {
      auto order = ranked(pool, false, true);
      for (std::size_t i = 0; i < half; ++i) {
        picks.push_back({order[i], "all_margin"});
      }
      break;
    }
    case ReplayStrategy::AllCenter: {
      auto order = ranked(pool, false, false);
      for (std::size_t i = 0; i < half; ++i) {
        picks.push_back({order[i], "all_center"});
      }
      break;
    }
    case ReplayStrategy::Random: {
      const std::vector<std::size_t> chosen =
          rng.pick_without_replacement(pool.size(), half);
      // Deterministic output order regardless of draw order.
      std::vector<std::size_t> sorted = chosen;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i : sorted) picks.push_back({pool[i], "random"});
      break;
    }
    case ReplayStrategy::HardCenter: {
      const std::size_t quarter = k / 4;
      auto hard_order = ranked(pool, true, true);
      auto center_order = ranked(pool, false, false);
      std::set<std::size_t> taken;
      for (std::size_t i = 0; i < quarter; ++i) {
        picks.push_back({hard_order[i], "hard"});
        taken.insert(hard_order[i]->index);
      }
      for (std::size_t i = 0; i < quarter; ++i) {
        const ScoredSample* s = center_order[i];
        if (taken.insert(s->index).second) {
          picks.push_back({s, "center"});
        } else {
          // Present in both top groups; keep it once, flagged as such.
          for (Pick& p : picks) {
            if (p.sample->index == s->index) p.criterion = "both";
          }
        }
      }
      // Overlap shrank the set below K/2: backfill from the next-ranked
      // hard samples, keeping the entropy emphasis.
      for (std::size_t i = quarter; picks.size() < half && i < hard_order.size();
           ++i) {
        if (taken.insert(hard_order[i]->index).second) {
          picks.push_back({hard_order[i], "backfill"});
        }
      }
      break;
    }
  }
  return picks;
}

}  // namespace

std::vector<ReplayEntry> select_replay(const Model& model,
                                       const Dataset& task_data, std::size_t k,
                                       ReplayStrategy strategy,
                                       std::size_t task_id, Rng& rng) {
  if (k == 0 || k % 4 != 0) {
    throw ParameterError("select_replay: K must be a positive multiple of 4, got " +
                         std::to_string(k));
  }
  const std::vector<ScoredSample> scored = score_samples(model, task_data);

  std::vector<const ScoredSample*> pools[2];
  for (const ScoredSample& s : scored) pools[s.label].push_back(&s);
  for (int cls = 0; cls <= 1; ++cls) {
    if (pools[cls].size() < k / 2) {
      throw SelectionError(
          "select_replay: class " + std::to_string(cls) + " has " +
          std::to_string(pools[cls].size()) + " samples, needs " +
          std::to_string(k / 2) + " for K=" + std::to_string(k));
    }
  }

  std::vector<ReplayEntry> entries;
  entries.reserve(k);
  for (int cls = 0; cls <= 1; ++cls) {
    for (const auto& [sample, criterion] :
         pick_for_class(pools[cls], k, strategy, rng)) {
      ReplayEntry e;
      e.input = task_data.inputs.row(sample->index);
      e.label = sample->label;
      e.task_id = task_id;
      e.source_index = sample->index;
      e.entropy = sample->entropy;
      e.centroid_distance = sample->centroid_distance;
      e.criterion = criterion;
      entries.push_back(std::move(e));
    }
  }
  return entries;
}

void write_replay_csv(const std::vector<ReplayEntry>& entries,
                      const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw StateError("write_replay_csv: cannot write " + path.string());
  os << "sample_id,label,task_id,entropy,centroid_distance,criterion\n";
  char buf[64];
  for (const ReplayEntry& e : entries) {
    os << e.source_index << "," << e.label << "," << e.task_id << ",";
    std::snprintf(buf, sizeof(buf), "%.12g", e.entropy);
    os << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.12g", e.centroid_distance);
    os << buf << "," << e.criterion << "\n";
  }
}

}  // namespace dfil
