#include "dfil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dfil/errors.hpp"
#include "dfil/rng.hpp"

namespace dfil {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::Dfil: return "dfil";
    case Method::Finetune: return "ft";
    case Method::Offline: return "offline";
    case Method::Er: return "er";
    case Method::Lwf: return "lwf";
  }
  return "dfil";
}

Method method_from_string(const std::string& s) {
  if (s == "dfil") return Method::Dfil;
  if (s == "ft" || s == "finetune") return Method::Finetune;
  if (s == "offline" || s == "ol") return Method::Offline;
  if (s == "er") return Method::Er;
  if (s == "lwf") return Method::Lwf;
  throw ParameterError("unknown method: " + s);
}

void TrainConfig::validate() const {
  if (epochs_per_task < 1) throw ParameterError("config: epochs_per_task >= 1");
  if (batch_size < 2) {
    throw ParameterError("config: batch_size must be at least 2");
  }
  if (learning_rate <= 0.0) {
    throw ParameterError("config: learning_rate must be positive");
  }
  if (lr_decay_factor <= 0.0 || lr_decay_factor > 1.0) {
    throw ParameterError("config: lr_decay_factor must be in (0, 1]");
  }
  if (lr_decay_every < 1) throw ParameterError("config: lr_decay_every >= 1");
  if (replay_size == 0 || replay_size % 4 != 0) {
    throw ParameterError("config: replay_size must be a positive multiple of 4");
  }
  weights.validate();
  model.validate();
}

// ---- config JSON ---------------------------------------------------------------

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> keys,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(keys.begin(), keys.end(), [&key](const char* k) {
          return key == k;
        }) == keys.end()) {
      throw ParameterError("config: unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["epochs_per_task"] = cfg.epochs_per_task;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["lr_decay_factor"] = cfg.lr_decay_factor;
  j["lr_decay_every"] = cfg.lr_decay_every;
  j["adam"] = {{"beta1", cfg.adam.beta1},
               {"beta2", cfg.adam.beta2},
               {"eps", cfg.adam.eps}};
  j["loss_weights"] = {{"alpha", cfg.weights.alpha},
                       {"beta", cfg.weights.beta},
                       {"gamma", cfg.weights.gamma},
                       {"kd_temperature", cfg.weights.kd_temperature},
                       {"scl_temperature", cfg.weights.scl_temperature}};
  j["mean_reduction"] = cfg.loss_options.mean_reduction;
  j["kd_t_squared"] = cfg.loss_options.kd_t_squared;
  j["replay"] = {{"size", cfg.replay_size},
                 {"strategy", to_string(cfg.strategy)},
                 {"enabled", cfg.use_replay}};
  j["carry_optimizer_state"] = cfg.carry_optimizer_state;
  j["seed"] = cfg.seed;
  j["method"] = to_string(cfg.method);
  j["model"] = {{"hidden", cfg.model.hidden},
                {"feature_dim", cfg.model.feature_dim}};
  return j.dump(2) + "\n";
}

TrainConfig train_config_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError("config: invalid JSON");
  reject_unknown_keys(
      j,
      {"epochs_per_task", "batch_size", "learning_rate", "lr_decay_factor",
       "lr_decay_every", "adam", "loss_weights", "mean_reduction",
       "kd_t_squared", "replay", "carry_optimizer_state", "seed", "method",
       "model"},
      "top level");
  TrainConfig cfg;
  try {
    cfg.epochs_per_task = j.value("epochs_per_task", cfg.epochs_per_task);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.lr_decay_factor = j.value("lr_decay_factor", cfg.lr_decay_factor);
    cfg.lr_decay_every = j.value("lr_decay_every", cfg.lr_decay_every);
    if (j.contains("adam")) {
      const json& a = j["adam"];
      reject_unknown_keys(a, {"beta1", "beta2", "eps"}, "adam");
      cfg.adam.beta1 = a.value("beta1", cfg.adam.beta1);
      cfg.adam.beta2 = a.value("beta2", cfg.adam.beta2);
      cfg.adam.eps = a.value("eps", cfg.adam.eps);
    }
    if (j.contains("loss_weights")) {
      const json& w = j["loss_weights"];
      reject_unknown_keys(
          w, {"alpha", "beta", "gamma", "kd_temperature", "scl_temperature"},
          "loss_weights");
      cfg.weights.alpha = w.value("alpha", cfg.weights.alpha);
      cfg.weights.beta = w.value("beta", cfg.weights.beta);
      cfg.weights.gamma = w.value("gamma", cfg.weights.gamma);
      cfg.weights.kd_temperature =
          w.value("kd_temperature", cfg.weights.kd_temperature);
      cfg.weights.scl_temperature =
          w.value("scl_temperature", cfg.weights.scl_temperature);
    }
    cfg.loss_options.mean_reduction =
        j.value("mean_reduction", cfg.loss_options.mean_reduction);
    cfg.loss_options.kd_t_squared =
        j.value("kd_t_squared", cfg.loss_options.kd_t_squared);
    if (j.contains("replay")) {
      const json& r = j["replay"];
      reject_unknown_keys(r, {"size", "strategy", "enabled"}, "replay");
      cfg.replay_size = r.value("size", cfg.replay_size);
      if (r.contains("strategy")) {
        cfg.strategy =
            replay_strategy_from_string(r["strategy"].get<std::string>());
      }
      cfg.use_replay = r.value("enabled", cfg.use_replay);
    }
    cfg.carry_optimizer_state =
        j.value("carry_optimizer_state", cfg.carry_optimizer_state);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("method")) {
      cfg.method = method_from_string(j["method"].get<std::string>());
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      reject_unknown_keys(m, {"hidden", "feature_dim"}, "model");
      cfg.model.hidden =
          m.value("hidden", cfg.model.hidden);
      cfg.model.feature_dim = m.value("feature_dim", cfg.model.feature_dim);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return cfg;
}

// ---- optimizer ------------------------------------------------------------------

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw DimensionError("adam_step: parameter/gradient/state sizes disagree");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) {
      throw NumericError("adam_step: non-finite gradient");
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

double effective_lr(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.learning_rate *
         std::pow(cfg.lr_decay_factor,
                  static_cast<double>(epoch / cfg.lr_decay_every));
}

// ---- evaluation ------------------------------------------------------------------

std::vector<int> predict(const Model& model, const Tensor& inputs) {
  const BatchOutput out = model.forward_batch(inputs);
  std::vector<int> preds(inputs.rows());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    preds[i] = out.probs.at(i, 1) > out.probs.at(i, 0) ? 1 : 0;
  }
  return preds;
}

double evaluate_accuracy(const Model& model, const Dataset& data) {
  return acc(predict(model, data.inputs), data.labels);
}

// ---- training loop ---------------------------------------------------------------

namespace {

struct TrainPool {
  Tensor inputs;  // n x d
  std::vector<int> labels;
  std::vector<SourceTag> sources;

  std::size_t size() const { return labels.size(); }
};

TrainPool build_pool(const Dataset& task_train, std::size_t task_id,
                     const ReplaySet& replay) {
  const std::size_t d = task_train.inputs.cols();
  const std::size_t n = task_train.size() + replay.size();
  TrainPool pool;
  pool.inputs = Tensor::zeros({n, d});
  pool.labels.resize(n);
  pool.sources.resize(n);
  for (std::size_t i = 0; i < task_train.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      pool.inputs.at(i, c) = task_train.inputs.at(i, c);
    }
    pool.labels[i] = task_train.labels[i];
    pool.sources[i] = SourceTag{false, task_id};
  }
  for (std::size_t r = 0; r < replay.size(); ++r) {
    const ReplayEntry& e = replay.entries()[r];
    const std::size_t i = task_train.size() + r;
    for (std::size_t c = 0; c < d; ++c) pool.inputs.at(i, c) = e.input.at(c);
    pool.labels[i] = e.label;
    pool.sources[i] = SourceTag{true, e.task_id};
  }
  return pool;
}

Batch gather_batch(const TrainPool& pool, const std::vector<std::size_t>& idx) {
  const std::size_t d = pool.inputs.cols();
  Batch batch;
  batch.inputs = Tensor::zeros({idx.size(), d});
  batch.labels.resize(idx.size());
  batch.sources.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      batch.inputs.at(i, c) = pool.inputs.at(idx[i], c);
    }
    batch.labels[i] = pool.labels[idx[i]];
    batch.sources[i] = pool.sources[idx[i]];
  }
  return batch;
}

// Consecutive chunks of the shuffled order. A final chunk with fewer than
// two samples or a single class is merged into the one before it (the
// contrastive term needs pairs).
std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<std::size_t>& order, const std::vector<int>& labels,
    std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() >= 2) {
    const std::vector<std::size_t>& last = batches.back();
    bool single_class = true;
    for (std::size_t i = 1; i < last.size(); ++i) {
      if (labels[last[i]] != labels[last[0]]) {
        single_class = false;
        break;
      }
    }
    if (last.size() < 2 || single_class) {
      std::vector<std::size_t>& prev = batches[batches.size() - 2];
      prev.insert(prev.end(), last.begin(), last.end());
      batches.pop_back();
    }
  }
  return batches;
}

// Baseline objectives: plain cross-entropy, optionally plus soft-label
// distillation (LWF). Builds only the terms the method optimizes so the
// loss log reflects the objective actually used.
std::pair<LossLogRow, std::vector<double>> baseline_step(
    const Batch& batch, const Model& student, const Model* teacher,
    const LossWeights& weights, bool use_kd, const LossOptions& options) {
  Tape tape;
  Model::TapedParams params = student.register_on(tape);
  Var inputs = tape.constant(batch.inputs);
  auto [features, logits] =
      Model::forward_on(params, student.activations(), inputs);
  (void)features;
  Var probs = softmax_rows(logits, 1.0);
  Var ce = ce_from_probs(probs, batch.labels);

  std::optional<Var> kd;
  if (use_kd) {
    const BatchOutput teacher_out = teacher->forward_batch(batch.inputs);
    kd = kd_from_logits(teacher_out.logits, logits, weights.kd_temperature,
                        options.kd_t_squared);
  }
  if (options.mean_reduction) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    ce = scale(ce, inv);
    if (kd) kd = scale(*kd, inv);
  }
  Var total = kd ? add(ce, scale(*kd, weights.beta)) : ce;

  LossLogRow row;
  row.ce = tape.value(ce).at(0);
  if (kd) row.kd = tape.value(*kd).at(0);
  row.total = tape.value(total).at(0);

  tape.backward(total);
  return {row, Model::collect_gradients(tape, params)};
}

LossLogRow dfil_step_row(const LossComponents& c) {
  LossLogRow row;
  row.ce = c.ce;
  row.scl = c.scl;
  row.kd = c.kd;
  row.fd = c.fd;
  row.total = c.total;
  return row;
}

bool method_uses_replay(const TrainConfig& cfg) {
  return (cfg.method == Method::Dfil && cfg.use_replay) ||
         cfg.method == Method::Er;
}

void validate_sequence(const TaskSequence& sequence) {
  if (sequence.empty()) throw ParameterError("training: empty task sequence");
  for (const DomainTask& task : sequence) {
    task.train.validate();
    task.test.validate();
  }
}

RunRecord run_incremental(const TaskSequence& sequence, const TrainConfig& cfg,
                          TrainObserver* observer) {
  RunRecord record;
  record.config = cfg;
  for (const DomainTask& task : sequence) record.task_names.push_back(task.name);

  ModelConfig model_cfg = cfg.model;
  model_cfg.input_dim = sequence.front().train.inputs.cols();
  Model model = Model::init(model_cfg, derive_seed(cfg.seed, {kInitStream}));

  std::optional<Model> teacher;
  ReplaySet replay;
  AdamState adam = AdamState::zeros(model.parameter_count());

  const ReplaySet no_replay;
  for (std::size_t task_idx = 1; task_idx <= sequence.size(); ++task_idx) {
    const DomainTask& task = sequence[task_idx - 1];
    const bool first_task = task_idx == 1;
    const TrainPool pool = build_pool(
        task.train, task_idx, method_uses_replay(cfg) ? replay : no_replay);

    if (!cfg.carry_optimizer_state || first_task) {
      adam = AdamState::zeros(model.parameter_count());
    }

    for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
      const double lr = effective_lr(cfg, epoch);
      Rng shuffle_rng(derive_seed(cfg.seed, {kShuffleStream, task_idx, epoch}));
      std::vector<std::size_t> order(pool.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      shuffle_rng.shuffle(order);

      const auto batches = make_batches(order, pool.labels, cfg.batch_size);
      for (std::size_t b = 0; b < batches.size(); ++b) {
        const Batch batch = gather_batch(pool, batches[b]);
        LossLogRow row;
        std::vector<double> gradient;
        bool have_components = false;
        try {
          switch (cfg.method) {
            case Method::Dfil: {
              DfilEvaluation eval = loss_dfil_with_grad(
                  batch, model, first_task ? nullptr : &*teacher, cfg.weights,
                  first_task, cfg.loss_options);
              row = dfil_step_row(eval.components);
              gradient = std::move(eval.gradient);
              break;
            }
            case Method::Lwf: {
              auto [r, g] = baseline_step(batch, model,
                                          first_task ? nullptr : &*teacher,
                                          cfg.weights, !first_task,
                                          cfg.loss_options);
              row = r;
              gradient = std::move(g);
              break;
            }
            default: {  // Finetune, Er: cross-entropy only
              auto [r, g] = baseline_step(batch, model, nullptr, cfg.weights,
                                          false, cfg.loss_options);
              row = r;
              gradient = std::move(g);
              break;
            }
          }
          have_components = true;
          std::vector<double> params = model.flat_parameters();
          adam_step(params, gradient, adam, lr, cfg.adam);
          model.set_flat_parameters(params);
        } catch (const NumericError& e) {
          std::string diag = "training aborted at task " +
                             std::to_string(task_idx) + " epoch " +
                             std::to_string(epoch + 1) + " batch " +
                             std::to_string(b + 1);
          if (have_components) {
            diag += " (ce=" + std::to_string(row.ce);
            if (row.scl) diag += " scl=" + std::to_string(*row.scl);
            if (row.kd) diag += " kd=" + std::to_string(*row.kd);
            if (row.fd) diag += " fd=" + std::to_string(*row.fd);
            diag += " total=" + std::to_string(row.total) + ")";
          }
          throw NumericError(diag + ": " + e.what());
        }
        row.task = task_idx;
        row.epoch = epoch + 1;
        row.batch = b + 1;
        record.losses.push_back(row);
        if (observer != nullptr) {
          observer->on_batch_end(task_idx, epoch + 1, b + 1, model,
                                 teacher ? &*teacher : nullptr, row);
        }
      }
      if (observer != nullptr) {
        observer->on_epoch_end(task_idx, epoch + 1, model,
                               teacher ? &*teacher : nullptr);
      }
    }

    // Replay selection uses the model that just finished this task; it will
    // be the teacher scoring its own training data.
    if (method_uses_replay(cfg)) {
      Rng selection_rng(derive_seed(cfg.seed, {kReplayStream, task_idx}));
      const ReplayStrategy strategy = cfg.method == Method::Er
                                          ? ReplayStrategy::Random
                                          : cfg.strategy;
      std::vector<ReplayEntry> selection =
          select_replay(model, task.train, cfg.replay_size, strategy, task_idx,
                        selection_rng);
      record.replay_selections.push_back(selection);
      replay.add_task_selection(std::move(selection));
    } else {
      record.replay_selections.emplace_back();
    }

    std::vector<double> acc_row;
    for (std::size_t j = 0; j < task_idx; ++j) {
      acc_row.push_back(evaluate_accuracy(model, sequence[j].test));
    }
    record.matrix.push_row(std::move(acc_row));

    teacher = model.snapshot();
    record.checkpoints.push_back(model);
    if (observer != nullptr) observer->on_task_end(task_idx, model, replay);
  }
  return record;
}

RunRecord run_offline(const TaskSequence& sequence, const TrainConfig& cfg,
                      TrainObserver* observer) {
  RunRecord record;
  record.config = cfg;
  record.offline = true;
  for (const DomainTask& task : sequence) record.task_names.push_back(task.name);

  // Union of all training splits, in task order, trained as one task.
  const std::size_t d = sequence.front().train.inputs.cols();
  std::size_t total = 0;
  for (const DomainTask& task : sequence) total += task.train.size();
  Dataset merged;
  merged.domain = "all";
  merged.split = "train";
  merged.inputs = Tensor::zeros({total, d});
  merged.labels.resize(total);
  std::size_t at = 0;
  for (const DomainTask& task : sequence) {
    for (std::size_t i = 0; i < task.train.size(); ++i, ++at) {
      for (std::size_t c = 0; c < d; ++c) {
        merged.inputs.at(at, c) = task.train.inputs.at(i, c);
      }
      merged.labels[at] = task.train.labels[i];
    }
  }

  TaskSequence single;
  single.push_back(DomainTask{"all", merged, sequence.front().test});
  TrainConfig sub = cfg;
  sub.method = Method::Finetune;
  RunRecord inner = run_incremental(single, sub, observer);

  record.losses = std::move(inner.losses);
  record.replay_selections = {{}};
  record.checkpoints = std::move(inner.checkpoints);
  const Model& model = record.checkpoints.front();
  for (const DomainTask& task : sequence) {
    record.offline_accuracies.push_back(evaluate_accuracy(model, task.test));
  }
  return record;
}

}  // namespace

RunRecord run_training(const TaskSequence& sequence, const TrainConfig& cfg,
                       TrainObserver* observer) {
  cfg.validate();
  validate_sequence(sequence);
  if (cfg.method == Method::Offline) {
    return run_offline(sequence, cfg, observer);
  }
  return run_incremental(sequence, cfg, observer);
}

RunRecord run_dfil(const TaskSequence& sequence, const TrainConfig& cfg,
                   TrainObserver* observer) {
  if (cfg.method != Method::Dfil) {
    throw ProtocolError("run_dfil: config method is " + to_string(cfg.method));
  }
  return run_training(sequence, cfg, observer);
}

RunRecord run_baseline(const TaskSequence& sequence, const TrainConfig& cfg,
                       TrainObserver* observer) {
  if (cfg.method == Method::Dfil) {
    throw ProtocolError("run_baseline: config method is dfil");
  }
  return run_training(sequence, cfg, observer);
}

// ---- summaries -------------------------------------------------------------------

std::vector<SummaryBoundary> summarize(const RunRecord& record) {
  std::vector<SummaryBoundary> out;
  if (record.offline) {
    SummaryBoundary row;
    row.after_task = record.task_names.size();
    double total = 0.0;
    for (double a : record.offline_accuracies) total += a;
    row.aa = total / static_cast<double>(record.offline_accuracies.size());
    out.push_back(row);
    return out;
  }
  for (std::size_t i = 1; i <= record.matrix.tasks(); ++i) {
    SummaryBoundary row;
    row.after_task = i;
    row.aa = average_accuracy(record.matrix, i);
    if (i >= 2) row.af = average_forgetting(record.matrix, i);
    out.push_back(row);
  }
  return out;
}

// ---- persistence -----------------------------------------------------------------

namespace {

std::string format_acc(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string format_loss(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw StateError("cannot write " + path.string());
  os << text;
}

}  // namespace

void save_run_record(const RunRecord& record,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.json", train_config_to_json(record.config));

  // accuracy_matrix.csv: rows = training stage, columns = evaluated task.
  {
    std::ostringstream os;
    os << "trained_on";
    for (const std::string& name : record.task_names) os << "," << name;
    os << "\n";
    if (record.offline) {
      os << "all";
      for (double a : record.offline_accuracies) os << "," << format_acc(a);
      os << "\n";
    } else {
      const auto& rows = record.matrix.rows();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        os << record.task_names[i];
        for (std::size_t j = 0; j < record.task_names.size(); ++j) {
          os << ",";
          if (j < rows[i].size()) os << format_acc(rows[i][j]);
        }
        os << "\n";
      }
    }
    write_text(dir / "accuracy_matrix.csv", os.str());
  }

  {
    std::ostringstream os;
    os << "task,epoch,batch,ce,scl,kd,fd,total\n";
    for (const LossLogRow& row : record.losses) {
      os << row.task << "," << row.epoch << "," << row.batch << ","
         << format_loss(row.ce) << ",";
      if (row.scl) os << format_loss(*row.scl);
      os << ",";
      if (row.kd) os << format_loss(*row.kd);
      os << ",";
      if (row.fd) os << format_loss(*row.fd);
      os << "," << format_loss(row.total) << "\n";
    }
    write_text(dir / "losses.csv", os.str());
  }

  for (std::size_t i = 0; i < record.replay_selections.size(); ++i) {
    if (record.replay_selections[i].empty()) continue;
    write_replay_csv(record.replay_selections[i],
                     dir / ("replay_task" + std::to_string(i + 1) + ".csv"));
  }

  for (std::size_t i = 0; i < record.checkpoints.size(); ++i) {
    const std::string name = record.offline
                                 ? "model_offline.dfil"
                                 : "model_task" + std::to_string(i + 1) + ".dfil";
    record.checkpoints[i].save(dir / name);
  }

  {
    json summary;
    summary["method"] = to_string(record.config.method);
    summary["seed"] = record.config.seed;
    summary["tasks"] = record.task_names;
    summary["incremental"] = !record.offline;
    if (record.offline) {
      summary["per_task_accuracy"] = record.offline_accuracies;
    }
    json boundaries = json::array();
    for (const SummaryBoundary& b : summarize(record)) {
      json row;
      row["after_task"] = b.after_task;
      row["aa"] = b.aa;
      row["af"] = b.af ? json(*b.af) : json(nullptr);
      boundaries.push_back(row);
    }
    summary["boundaries"] = boundaries;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw StateError("cannot open " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

RunDirData load_run_dir(const std::filesystem::path& dir) {
  RunDirData data;
  data.config_text = read_text(dir / "config.json");
  data.summary_text = read_text(dir / "summary.json");

  {
    std::ifstream is(dir / "accuracy_matrix.csv");
    if (!is) throw StateError("cannot open accuracy_matrix.csv");
    std::string line;
    if (!std::getline(is, line)) {
      throw ParseError("accuracy_matrix.csv: empty");
    }
    const auto header = split_csv_line(line);
    data.task_names.assign(header.begin() + 1, header.end());
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto fields = split_csv_line(line);
      data.row_labels.push_back(fields[0]);
      std::vector<double> row;
      for (std::size_t i = 1; i < fields.size(); ++i) {
        if (!fields[i].empty()) row.push_back(std::stod(fields[i]));
      }
      data.acc_rows.push_back(std::move(row));
    }
  }

  {
    std::ifstream is(dir / "losses.csv");
    if (!is) throw StateError("cannot open losses.csv");
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      if (f.size() != 8) throw ParseError("losses.csv: bad row: " + line);
      LossLogRow row;
      row.task = std::stoul(f[0]);
      row.epoch = std::stoul(f[1]);
      row.batch = std::stoul(f[2]);
      row.ce = std::stod(f[3]);
      if (!f[4].empty()) row.scl = std::stod(f[4]);
      if (!f[5].empty()) row.kd = std::stod(f[5]);
      if (!f[6].empty()) row.fd = std::stod(f[6]);
      row.total = std::stod(f[7]);
      data.loss_rows.push_back(row);
    }
  }
  return data;
}

}  // namespace dfil
