#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <vector>

#include "dfil/errors.hpp"
#include "dfil/trainer.hpp"

using namespace dfil;

namespace {

// Shrunk two-domain stream for protocol tests.
TaskSequence small_stream(std::uint64_t seed = 5) {
  StreamSpec spec = preset("two-domain");
  for (DomainSpec& d : spec.domains) {
    d.n_train_per_class = 40;
    d.n_test_per_class = 30;
  }
  spec.few_shot_cap = 40;
  return generate_stream(spec, seed);
}

TrainConfig quick_config(Method method, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.method = method;
  cfg.seed = seed;
  cfg.epochs_per_task = 5;
  cfg.batch_size = 16;
  cfg.replay_size = 8;
  cfg.model.hidden = {16, 8};
  cfg.model.feature_dim = 6;
  return cfg;
}

}  // namespace

// ---- Adam ---------------------------------------------------------------------

TEST_CASE("zero gradient is a fixed point whose moments decay") {
  std::vector<double> params = {1.0, -2.0};
  AdamState state = AdamState::zeros(2);
  AdamConfig adam;

  adam_step(params, {0.5, -0.25}, state, 1e-3, adam);
  const std::vector<double> after_first = params;
  const double m0 = state.m[0];

  adam_step(params, {0.0, 0.0}, state, 1e-3, adam);
  // Step direction follows the decayed first moment, so parameters still
  // move, and the moment shrank by exactly beta1.
  CHECK(state.m[0] == doctest::Approx(adam.beta1 * m0).epsilon(1e-15));

  AdamState fresh = AdamState::zeros(2);
  std::vector<double> fixed = {3.0, 4.0};
  adam_step(fixed, {0.0, 0.0}, fresh, 1e-3, adam);
  CHECK(fixed[0] == 3.0);  // zero gradient from a fresh state: no movement
  CHECK(fixed[1] == 4.0);
  (void)after_first;
}

TEST_CASE("first step from fresh state matches the hand formula") {
  const double g = 0.37;
  const double lr = 5e-4;
  std::vector<double> params = {1.0};
  AdamState state = AdamState::zeros(1);
  AdamConfig adam;
  adam_step(params, {g}, state, lr, adam);
  // Bias corrections cancel on step one: delta = -lr * g / (|g| + eps).
  const double expected = 1.0 - lr * g / (std::abs(g) + adam.eps);
  CHECK(params[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("constant gradient drives the step magnitude toward lr") {
  const double g = -2.5;
  std::vector<double> params = {0.0};
  AdamState state = AdamState::zeros(1);
  AdamConfig adam;
  double previous = params[0];
  double step = 0.0;
  for (int i = 0; i < 500; ++i) {
    adam_step(params, {g}, state, 1e-3, adam);
    step = params[0] - previous;
    previous = params[0];
  }
  CHECK(std::abs(std::abs(step) - 1e-3) < 1e-5);
  CHECK(step > 0.0);  // negative gradient moves the parameter up
}

TEST_CASE("adam rejects non-finite gradients and shape mismatches") {
  std::vector<double> params = {1.0};
  AdamState state = AdamState::zeros(1);
  CHECK_THROWS_AS(
      adam_step(params, {std::numeric_limits<double>::quiet_NaN()}, state,
                1e-3),
      NumericError);
  AdamState wrong = AdamState::zeros(2);
  CHECK_THROWS_AS(adam_step(params, {1.0}, wrong, 1e-3), DimensionError);
}

// ---- schedule --------------------------------------------------------------------

TEST_CASE("learning rate halves every five epochs and resets per task") {
  TrainConfig cfg;
  cfg.learning_rate = 5e-4;
  CHECK(effective_lr(cfg, 0) == 5e-4);
  CHECK(effective_lr(cfg, 4) == 5e-4);
  CHECK(effective_lr(cfg, 5) == 2.5e-4);
  CHECK(effective_lr(cfg, 9) == 2.5e-4);
  CHECK(effective_lr(cfg, 10) == 1.25e-4);
  CHECK(effective_lr(cfg, 19) == 6.25e-05);
}

// ---- protocol --------------------------------------------------------------------

TEST_CASE("identical config and seed reproduce the run exactly") {
  const TaskSequence seq = small_stream();
  const TrainConfig cfg = quick_config(Method::Dfil, 42);
  const RunRecord a = run_dfil(seq, cfg);
  const RunRecord b = run_dfil(seq, cfg);

  REQUIRE(a.checkpoints.size() == b.checkpoints.size());
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    CHECK(parameter_hash(a.checkpoints[i]) == parameter_hash(b.checkpoints[i]));
  }
  CHECK(a.matrix.rows() == b.matrix.rows());
  REQUIRE(a.losses.size() == b.losses.size());
  for (std::size_t i = 0; i < a.losses.size(); ++i) {
    CHECK(a.losses[i].total == b.losses[i].total);
  }
}

namespace {

struct TeacherWatcher : TrainObserver {
  std::map<std::size_t, std::set<std::uint64_t>> hashes_by_task;
  std::vector<std::size_t> replay_sizes;

  void on_batch_end(std::size_t task, std::size_t, std::size_t, const Model&,
                    const Model* teacher, const LossLogRow&) override {
    if (teacher != nullptr) hashes_by_task[task].insert(parameter_hash(*teacher));
  }
  void on_task_end(std::size_t, const Model&, const ReplaySet& replay) override {
    replay_sizes.push_back(replay.size());
  }
};

}  // namespace

TEST_CASE("teacher parameters are frozen within each task") {
  const TaskSequence seq = small_stream();
  const TrainConfig cfg = quick_config(Method::Dfil, 7);
  TeacherWatcher watcher;
  const RunRecord record = run_dfil(seq, cfg, &watcher);

  // Task 1 has no teacher; task 2's teacher hash must be a single constant
  // equal to the task-1 checkpoint.
  CHECK(watcher.hashes_by_task.count(1) == 0);
  REQUIRE(watcher.hashes_by_task.count(2) == 1);
  CHECK(watcher.hashes_by_task[2].size() == 1);
  CHECK(*watcher.hashes_by_task[2].begin() ==
        parameter_hash(record.checkpoints[0]));
}

TEST_CASE("replay set grows by exactly K per completed task") {
  const TaskSequence seq = small_stream();
  const TrainConfig cfg = quick_config(Method::Dfil, 9);
  TeacherWatcher watcher;
  const RunRecord record = run_dfil(seq, cfg, &watcher);
  REQUIRE(watcher.replay_sizes.size() == 2);
  CHECK(watcher.replay_sizes[0] == cfg.replay_size);
  CHECK(watcher.replay_sizes[1] == 2 * cfg.replay_size);
  REQUIRE(record.replay_selections.size() == 2);
  CHECK(record.replay_selections[0].size() == cfg.replay_size);
  CHECK(record.replay_selections[1].size() == cfg.replay_size);
}

TEST_CASE("single-task sequence trains with learning losses only") {
  TaskSequence seq = small_stream();
  seq.resize(1);
  const TrainConfig cfg = quick_config(Method::Dfil, 11);
  const RunRecord record = run_dfil(seq, cfg);
  for (const LossLogRow& row : record.losses) {
    CHECK_FALSE(row.kd.has_value());
    CHECK_FALSE(row.fd.has_value());
    CHECK(row.scl.has_value());
  }
  // The replay set is still filled once at the end.
  REQUIRE(record.replay_selections.size() == 1);
  CHECK(record.replay_selections[0].size() == cfg.replay_size);
  CHECK(record.matrix.tasks() == 1);
}

TEST_CASE("repeating the same domain does not lose its accuracy") {
  TaskSequence seq = small_stream();
  seq[1] = seq[0];
  seq[1].name = "domain1-again";
  const TrainConfig cfg = quick_config(Method::Dfil, 13);
  const RunRecord record = run_dfil(seq, cfg);
  CHECK(record.matrix.at(2, 1) >= record.matrix.at(1, 1) - 2.0);
}

TEST_CASE("offline and finetune coincide on a single task") {
  TaskSequence seq = small_stream();
  seq.resize(1);
  TrainConfig ft = quick_config(Method::Finetune, 17);
  TrainConfig ol = quick_config(Method::Offline, 17);
  const RunRecord a = run_baseline(seq, ft);
  const RunRecord b = run_baseline(seq, ol);
  CHECK(parameter_hash(a.checkpoints.back()) ==
        parameter_hash(b.checkpoints.back()));
}

TEST_CASE("method-specific loss terms appear in the log") {
  const TaskSequence seq = small_stream();

  const RunRecord lwf = run_baseline(seq, quick_config(Method::Lwf, 19));
  for (const LossLogRow& row : lwf.losses) {
    CHECK_FALSE(row.scl.has_value());
    CHECK_FALSE(row.fd.has_value());
    CHECK(row.kd.has_value() == (row.task == 2));
  }
  CHECK(lwf.replay_selections[0].empty());

  const RunRecord er = run_baseline(seq, quick_config(Method::Er, 19));
  for (const LossLogRow& row : er.losses) {
    CHECK_FALSE(row.scl.has_value());
    CHECK_FALSE(row.kd.has_value());
    CHECK_FALSE(row.fd.has_value());
  }
  REQUIRE(er.replay_selections.size() == 2);
  CHECK(er.replay_selections[0].size() == 8);
  for (const ReplayEntry& e : er.replay_selections[0]) {
    CHECK(e.criterion == "random");
  }
}

TEST_CASE("disabling replay skips selection entirely") {
  const TaskSequence seq = small_stream();
  TrainConfig cfg = quick_config(Method::Dfil, 21);
  cfg.use_replay = false;
  const RunRecord record = run_dfil(seq, cfg);
  for (const auto& selection : record.replay_selections) {
    CHECK(selection.empty());
  }
}

TEST_CASE("a one-sample final chunk is merged into the previous batch") {
  TaskSequence seq = small_stream();
  seq.resize(1);
  // 33 training samples with batch 16 would leave a final chunk of 1.
  Dataset& train = seq[0].train;
  Tensor inputs = Tensor::zeros({33, train.inputs.cols()});
  std::vector<int> labels(33);
  for (std::size_t i = 0; i < 33; ++i) {
    labels[i] = i % 2;
    for (std::size_t c = 0; c < train.inputs.cols(); ++c) {
      inputs.at(i, c) = train.inputs.at(i % train.size(), c);
    }
  }
  train.inputs = std::move(inputs);
  train.labels = std::move(labels);

  TrainConfig cfg = quick_config(Method::Finetune, 23);
  cfg.epochs_per_task = 3;
  const RunRecord record = run_baseline(seq, cfg);
  // 33 = 16 + 16 + 1 -> two batches per epoch after the merge.
  CHECK(record.losses.size() == 3 * 2);
  for (const LossLogRow& row : record.losses) CHECK(row.batch <= 2);
}

TEST_CASE("dispatch guards reject mismatched methods") {
  const TaskSequence seq = small_stream();
  CHECK_THROWS_AS(run_dfil(seq, quick_config(Method::Finetune)), ProtocolError);
  CHECK_THROWS_AS(run_baseline(seq, quick_config(Method::Dfil)), ProtocolError);
}

TEST_CASE("exploding training aborts with a located diagnostic") {
  const TaskSequence seq = small_stream();
  TrainConfig cfg = quick_config(Method::Finetune, 29);
  cfg.learning_rate = 1e150;
  cfg.epochs_per_task = 2;
  try {
    run_baseline(seq, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("aborted at task") != std::string::npos);
  }
}

TEST_CASE("config validation catches bad values") {
  TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = TrainConfig{};
  cfg.replay_size = 10;  // not a multiple of 4
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = TrainConfig{};
  cfg.epochs_per_task = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
}

TEST_CASE("config json round-trips and rejects unknown keys") {
  TrainConfig cfg = quick_config(Method::Er, 31);
  cfg.weights.alpha = 0.25;
  cfg.strategy = ReplayStrategy::AllCenter;
  cfg.loss_options.kd_t_squared = true;
  const TrainConfig back = train_config_from_json(train_config_to_json(cfg));
  CHECK(back.method == cfg.method);
  CHECK(back.seed == cfg.seed);
  CHECK(back.weights.alpha == cfg.weights.alpha);
  CHECK(back.strategy == cfg.strategy);
  CHECK(back.loss_options.kd_t_squared == cfg.loss_options.kd_t_squared);
  CHECK(back.model.hidden == cfg.model.hidden);

  CHECK_THROWS_AS(train_config_from_json("{\"learning_rat\": 0.1}"),
                  ParameterError);
  CHECK_THROWS_AS(train_config_from_json("not json"), ParseError);
}

TEST_CASE("run records persist and reload faithfully") {
  const TaskSequence seq = small_stream();
  const TrainConfig cfg = quick_config(Method::Dfil, 33);
  const RunRecord record = run_dfil(seq, cfg);

  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "dfil_test_runrecord";
  std::filesystem::remove_all(dir);
  save_run_record(record, dir);

  for (const char* name :
       {"config.json", "accuracy_matrix.csv", "losses.csv", "summary.json",
        "replay_task1.csv", "replay_task2.csv", "model_task1.dfil",
        "model_task2.dfil"}) {
    CHECK(std::filesystem::exists(dir / name));
  }

  const RunDirData loaded = load_run_dir(dir);
  REQUIRE(loaded.task_names.size() == 2);
  REQUIRE(loaded.acc_rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(loaded.task_names[i] == record.task_names[i]);
    REQUIRE(loaded.acc_rows[i].size() == i + 1);
    for (std::size_t j = 0; j <= i; ++j) {
      // The CSV stores six decimals.
      CHECK(std::abs(loaded.acc_rows[i][j] - record.matrix.at(i + 1, j + 1)) <
            1e-6);
    }
  }
  REQUIRE(loaded.loss_rows.size() == record.losses.size());
  CHECK(loaded.loss_rows.front().ce ==
        doctest::Approx(record.losses.front().ce).epsilon(1e-9));
  CHECK(loaded.loss_rows.back().kd.has_value() ==
        record.losses.back().kd.has_value());

  // The saved effective config parses back to the same settings, and the
  // checkpoints reload bit-exactly.
  const TrainConfig echoed = train_config_from_json(loaded.config_text);
  CHECK(echoed.seed == cfg.seed);
  CHECK(echoed.method == cfg.method);
  CHECK(echoed.replay_size == cfg.replay_size);
  const Model reloaded = Model::load(dir / "model_task1.dfil");
  CHECK(parameter_hash(reloaded) == parameter_hash(record.checkpoints[0]));

  std::filesystem::remove_all(dir);
}

TEST_CASE("forgetting computed from the matrix matches a direct oracle") {
  const TaskSequence seq = generate_stream(preset("four-domain"), 7);
  TrainConfig cfg = quick_config(Method::Finetune, 7);
  cfg.epochs_per_task = 10;
  cfg.batch_size = 32;
  const RunRecord record = run_baseline(seq, cfg);

  const double af = average_forgetting(record.matrix, 4);
  // Spreadsheet-style recomputation straight off the rows.
  const auto& rows = record.matrix.rows();
  double expect = 0.0;
  for (std::size_t j = 0; j < 3; ++j) expect += rows[j][j] - rows[3][j];
  expect /= 3.0;
  CHECK(af == doctest::Approx(expect).epsilon(1e-12));

  // The distribution shift is real: finetuning forgets.
  CHECK(af > 0.0);
}

namespace {

// Evaluates the full objective over D'_i (task data plus accumulated replay)
// at every epoch end.
struct PoolLossWatcher : TrainObserver {
  const TaskSequence* sequence = nullptr;
  const std::vector<std::vector<ReplayEntry>>* selections = nullptr;
  TrainConfig cfg;
  std::map<std::size_t, std::vector<double>> per_task;

  void on_epoch_end(std::size_t task, std::size_t, const Model& student,
                    const Model* teacher) override {
    const Dataset& train = (*sequence)[task - 1].train;
    std::size_t extra = 0;
    for (std::size_t t = 0; t + 1 < task; ++t) extra += (*selections)[t].size();
    Batch pool;
    pool.inputs = Tensor::zeros({train.size() + extra, train.inputs.cols()});
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (std::size_t c = 0; c < train.inputs.cols(); ++c) {
        pool.inputs.at(i, c) = train.inputs.at(i, c);
      }
      pool.labels.push_back(train.labels[i]);
    }
    std::size_t at = train.size();
    for (std::size_t t = 0; t + 1 < task; ++t) {
      for (const ReplayEntry& e : (*selections)[t]) {
        for (std::size_t c = 0; c < e.input.size(); ++c) {
          pool.inputs.at(at, c) = e.input.at(c);
        }
        pool.labels.push_back(e.label);
        ++at;
      }
    }
    pool.sources.assign(pool.labels.size(), SourceTag{});
    const LossComponents c = loss_dfil(pool, student, teacher, cfg.weights,
                                       task == 1, cfg.loss_options);
    per_task[task].push_back(c.total);
  }
};

}  // namespace

TEST_CASE("the pool objective is non-increasing across epochs") {
  // Smoke property over seeded default-config runs: the objective evaluated
  // on all of D'_i at each epoch end never goes up.
  for (std::uint64_t seed : {1u, 2u}) {
    const TaskSequence seq = generate_stream(preset("four-domain"), seed);
    TrainConfig cfg;
    cfg.seed = seed;
    const RunRecord record = run_dfil(seq, cfg);  // fixes replay selections
    PoolLossWatcher watcher;
    watcher.sequence = &seq;
    watcher.selections = &record.replay_selections;
    watcher.cfg = cfg;
    run_dfil(seq, cfg, &watcher);
    for (const auto& [task, losses] : watcher.per_task) {
      for (std::size_t e = 1; e < losses.size(); ++e) {
        INFO("seed ", seed, " task ", task, " epoch ", e + 1);
        CHECK(losses[e] <= losses[e - 1] + 1e-9);
      }
    }
  }
}

TEST_CASE("random replay forgets no more than plain finetuning") {
  const TaskSequence seq = generate_stream(preset("four-domain"), 1);
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.method = Method::Er;
  const RunRecord er = run_baseline(seq, cfg);
  cfg.method = Method::Finetune;
  const RunRecord ft = run_baseline(seq, cfg);
  CHECK(average_forgetting(er.matrix, 4) <= average_forgetting(ft.matrix, 4));
}

TEST_CASE("finetuning erodes the first task monotonically (seeded)") {
  const TaskSequence seq = generate_stream(preset("four-domain"), 3);
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.method = Method::Finetune;
  const RunRecord record = run_baseline(seq, cfg);
  for (std::size_t i = 2; i <= 4; ++i) {
    CHECK(record.matrix.at(i, 1) < record.matrix.at(i - 1, 1));
  }
}

TEST_CASE("identical fake distributions leave nothing to forget") {
  const TaskSequence seq = generate_stream(preset("four-domain-identical"), 7);
  TrainConfig cfg;  // full default configuration
  cfg.method = Method::Finetune;
  cfg.seed = 7;
  const RunRecord record = run_baseline(seq, cfg);
  CHECK(std::abs(average_forgetting(record.matrix, 4)) <= 3.0);
}
