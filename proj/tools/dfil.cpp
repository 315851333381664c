// Experiment-harness CLI: synthetic stream generation, incremental training,
// oracle verification suites, and run reporting.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dfil/datasets.hpp"
#include "dfil/errors.hpp"
#include "dfil/metrics.hpp"
#include "dfil/trainer.hpp"
#include "dfil/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw dfil::StateError("cannot open " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw dfil::StateError("cannot write " + path.string());
  os << text;
}

std::optional<std::uint64_t> env_seed() {
  const char* value = std::getenv("DFIL_SEED");
  if (value == nullptr || *value == '\0') return std::nullopt;
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw dfil::ParameterError(std::string("DFIL_SEED is not an integer: ") +
                               value);
  }
}

// ---- table rendering -------------------------------------------------------

std::string format_cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string accuracy_table(const std::vector<std::string>& task_names,
                           const std::vector<std::string>& row_labels,
                           const std::vector<std::vector<double>>& rows) {
  const int width = 10;
  std::ostringstream os;
  auto pad = [&os, width](const std::string& s) {
    os << std::string(width > static_cast<int>(s.size())
                          ? width - static_cast<int>(s.size())
                          : 1,
                      ' ')
       << s;
  };
  os << "trained_on";
  for (const std::string& name : task_names) pad(name);
  pad("AA");
  pad("AF");
  os << "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    os << row_labels[r]
       << std::string(row_labels[r].size() < 10 ? 10 - row_labels[r].size() : 1,
                      ' ');
    double total = 0.0;
    for (std::size_t c = 0; c < task_names.size(); ++c) {
      if (c < rows[r].size()) {
        pad(format_cell(rows[r][c]));
        total += rows[r][c];
      } else {
        pad("-");
      }
    }
    pad(format_cell(total / static_cast<double>(rows[r].size())));
    // AF needs the earlier diagonal entries; only defined for triangular
    // incremental records past the first row.
    if (r >= 1 && rows[r].size() == r + 1 && rows[0].size() == 1) {
      double forgetting = 0.0;
      for (std::size_t j = 0; j < r; ++j) {
        forgetting += rows[j][j] - rows[r][j];
      }
      pad(format_cell(forgetting / static_cast<double>(r)));
    } else {
      pad("-");
    }
    os << "\n";
  }
  return os.str();
}

// ---- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string preset;
  std::string spec_path;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string dump_presets;
};

int cmd_generate(const GenerateArgs& args) {
  if (!args.dump_presets.empty()) {
    write_file(args.dump_presets, dfil::preset_catalog_json() + "\n");
    std::cout << "wrote preset catalog to " << args.dump_presets << "\n";
    return kExitOk;
  }
  if (args.preset.empty() == args.spec_path.empty()) {
    throw dfil::ParameterError("generate: need exactly one of --preset/--spec");
  }
  if (args.out.empty()) {
    throw dfil::ParameterError("generate: --out is required");
  }
  dfil::StreamSpec spec;
  std::string source;
  if (!args.preset.empty()) {
    spec = dfil::preset(args.preset);
    source = "preset:" + args.preset;
  } else {
    spec = dfil::stream_spec_from_json(read_file(args.spec_path));
    source = "spec:" + args.spec_path;
  }

  std::uint64_t seed = args.seed_given ? args.seed : env_seed().value_or(0);
  const dfil::TaskSequence sequence = dfil::generate_stream(spec, seed);

  const fs::path out(args.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw dfil::StateError("generate: cannot create " + out.string());

  json manifest;
  manifest["format"] = "dfil-stream";
  manifest["version"] = 1;
  manifest["seed"] = seed;
  manifest["source"] = source;
  manifest["few_shot_cap"] = spec.few_shot_cap;
  manifest["spec"] = json::parse(dfil::stream_spec_to_json(spec));
  json domains = json::array();
  for (const dfil::DomainTask& task : sequence) {
    const std::string train_name = task.name + "_train.csv";
    const std::string test_name = task.name + "_test.csv";
    dfil::save_csv(task.train, out / train_name);
    dfil::save_csv(task.test, out / test_name);
    domains.push_back({{"name", task.name},
                       {"train", train_name},
                       {"test", test_name},
                       {"input_dim", task.train.inputs.cols()},
                       {"n_train", task.train.size()},
                       {"n_test", task.test.size()}});
  }
  manifest["domains"] = domains;
  write_file(out / "manifest.json", manifest.dump(2) + "\n");

  std::cout << "generated " << sequence.size() << " domains (seed " << seed
            << ") under " << out.string() << "\n";
  return kExitOk;
}

// ---- train ---------------------------------------------------------------------

dfil::TaskSequence load_stream_dir(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw dfil::StateError("train: no manifest.json in " + dir.string());
  }
  json manifest = json::parse(read_file(manifest_path), nullptr, false);
  if (manifest.is_discarded() ||
      manifest.value("format", "") != "dfil-stream") {
    throw dfil::ParseError("train: bad stream manifest in " + dir.string());
  }
  dfil::TaskSequence sequence;
  for (const json& d : manifest.at("domains")) {
    dfil::DomainTask task;
    task.name = d.at("name").get<std::string>();
    task.train = dfil::load_csv(dir / d.at("train").get<std::string>());
    task.train.domain = task.name;
    task.train.split = "train";
    task.test = dfil::load_csv(dir / d.at("test").get<std::string>());
    task.test.domain = task.name;
    task.test.split = "test";
    sequence.push_back(std::move(task));
  }
  return sequence;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string method;
  std::string config_path;
  bool force = false;

  // Flag overrides; optional so "flag > file > default" holds.
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> alpha, beta, gamma;
  std::optional<double> kd_temperature, scl_temperature;
  std::optional<std::size_t> replay_size;
  std::optional<std::string> strategy;
  bool no_replay = false;
  bool mean_reduction = false;
  bool kd_t_squared = false;
  bool carry_optimizer_state = false;
};

dfil::TrainConfig resolve_config(const TrainArgs& args) {
  dfil::TrainConfig cfg;
  if (const auto seed = env_seed()) cfg.seed = *seed;
  if (!args.config_path.empty()) {
    cfg = dfil::train_config_from_json(read_file(args.config_path));
    // The config file wins over the environment only where it speaks.
    if (const auto seed = env_seed();
        seed && json::parse(read_file(args.config_path)).count("seed") == 0) {
      cfg.seed = *seed;
    }
  }
  if (!args.method.empty()) cfg.method = dfil::method_from_string(args.method);
  if (args.seed) cfg.seed = *args.seed;
  if (args.epochs) cfg.epochs_per_task = *args.epochs;
  if (args.batch_size) cfg.batch_size = *args.batch_size;
  if (args.lr) cfg.learning_rate = *args.lr;
  if (args.alpha) cfg.weights.alpha = *args.alpha;
  if (args.beta) cfg.weights.beta = *args.beta;
  if (args.gamma) cfg.weights.gamma = *args.gamma;
  if (args.kd_temperature) cfg.weights.kd_temperature = *args.kd_temperature;
  if (args.scl_temperature) cfg.weights.scl_temperature = *args.scl_temperature;
  if (args.replay_size) cfg.replay_size = *args.replay_size;
  if (args.strategy) {
    cfg.strategy = dfil::replay_strategy_from_string(*args.strategy);
  }
  if (args.no_replay) cfg.use_replay = false;
  if (args.mean_reduction) cfg.loss_options.mean_reduction = true;
  if (args.kd_t_squared) cfg.loss_options.kd_t_squared = true;
  if (args.carry_optimizer_state) cfg.carry_optimizer_state = true;
  return cfg;
}

int cmd_train(const TrainArgs& args) {
  if (args.data.empty() || !fs::exists(args.data)) {
    throw dfil::StateError("train: data directory not found: " + args.data);
  }
  const dfil::TaskSequence sequence = load_stream_dir(args.data);
  const dfil::TrainConfig cfg = resolve_config(args);
  cfg.validate();

  const fs::path out(args.out);
  if (fs::exists(out / "manifest.json") && !args.force) {
    throw dfil::StateError("train: run directory " + out.string() +
                           " already exists (use --force to overwrite)");
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw dfil::StateError("train: cannot create " + out.string());

  json run_manifest;
  run_manifest["id"] = out.filename().string();
  run_manifest["method"] = dfil::to_string(cfg.method);
  run_manifest["data_dir"] = args.data;
  run_manifest["config_path"] = args.config_path;
  run_manifest["created_at"] = iso_timestamp();

  const dfil::RunRecord record = dfil::run_training(sequence, cfg);
  dfil::save_run_record(record, out);

  run_manifest["finished_at"] = iso_timestamp();
  write_file(out / "manifest.json", run_manifest.dump(2) + "\n");

  std::cout << "method: " << dfil::to_string(cfg.method)
            << "  seed: " << cfg.seed << "  tasks: " << sequence.size()
            << "\n\n";
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> rows;
  if (record.offline) {
    row_labels.push_back("all");
    rows.push_back(record.offline_accuracies);
  } else {
    for (std::size_t i = 0; i < record.matrix.tasks(); ++i) {
      row_labels.push_back(record.task_names[i]);
      rows.push_back(record.matrix.rows()[i]);
    }
  }
  std::cout << accuracy_table(record.task_names, row_labels, rows);
  std::cout << "\nrun record written to " << out.string() << "\n";
  return kExitOk;
}

// ---- verify -----------------------------------------------------------------------

int cmd_verify(const std::string& suite) {
  std::vector<dfil::CheckResult> results;
  if (suite == "grad") {
    results = dfil::verify_grad();
  } else if (suite == "losses") {
    results = dfil::verify_losses();
  } else if (suite == "replay") {
    results = dfil::verify_replay();
  } else if (suite == "metrics") {
    results = dfil::verify_metrics();
  } else if (suite == "all") {
    results = dfil::verify_all();
  } else {
    throw dfil::ParameterError("verify: unknown suite '" + suite + "'");
  }

  bool all_pass = true;
  for (const dfil::CheckResult& r : results) {
    std::printf("[%s] %-32s max_error=%.3e tolerance=%.3e\n",
                r.pass ? "PASS" : "FAIL", r.name.c_str(), r.max_error,
                r.tolerance);
    if (!r.pass) {
      all_pass = false;
      if (!r.detail.empty()) std::printf("       failing case: %s\n",
                                         r.detail.c_str());
    }
  }
  std::printf("%zu checks, %s\n", results.size(),
              all_pass ? "all passed" : "FAILURES present");
  return all_pass ? kExitOk : kExitVerifyFailed;
}

// ---- report -----------------------------------------------------------------------

struct EpochLossSummary {
  std::size_t task = 1;
  std::size_t epoch = 1;
  double ce = 0.0;
  std::optional<double> scl, kd, fd;
  double total = 0.0;
};

std::vector<EpochLossSummary> mean_losses_per_epoch(
    const std::vector<dfil::LossLogRow>& rows) {
  std::vector<EpochLossSummary> out;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    EpochLossSummary s;
    s.task = rows[i].task;
    s.epoch = rows[i].epoch;
    double scl = 0.0, kd = 0.0, fd = 0.0;
    bool has_scl = false, has_kd = false, has_fd = false;
    std::size_t n = 0;
    while (j < rows.size() && rows[j].task == s.task &&
           rows[j].epoch == s.epoch) {
      s.ce += rows[j].ce;
      s.total += rows[j].total;
      if (rows[j].scl) { scl += *rows[j].scl; has_scl = true; }
      if (rows[j].kd) { kd += *rows[j].kd; has_kd = true; }
      if (rows[j].fd) { fd += *rows[j].fd; has_fd = true; }
      ++n;
      ++j;
    }
    const double inv = 1.0 / static_cast<double>(n);
    s.ce *= inv;
    s.total *= inv;
    if (has_scl) s.scl = scl * inv;
    if (has_kd) s.kd = kd * inv;
    if (has_fd) s.fd = fd * inv;
    out.push_back(s);
    i = j;
  }
  return out;
}

int cmd_report(const std::string& run_dir, const std::string& format) {
  const fs::path dir(run_dir);
  for (const char* required :
       {"config.json", "accuracy_matrix.csv", "losses.csv", "summary.json"}) {
    if (!fs::exists(dir / required)) {
      throw dfil::StateError("report: incomplete run, missing " +
                             std::string(required));
    }
  }
  const dfil::RunDirData data = dfil::load_run_dir(dir);
  const auto epoch_losses = mean_losses_per_epoch(data.loss_rows);

  if (format == "csv") {
    // Same schema as accuracy_matrix.csv.
    std::cout << "trained_on";
    for (const std::string& name : data.task_names) std::cout << "," << name;
    std::cout << "\n";
    for (std::size_t r = 0; r < data.acc_rows.size(); ++r) {
      std::cout << data.row_labels[r];
      for (std::size_t c = 0; c < data.task_names.size(); ++c) {
        std::cout << ",";
        if (c < data.acc_rows[r].size()) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.6f", data.acc_rows[r][c]);
          std::cout << buf;
        }
      }
      std::cout << "\n";
    }
    return kExitOk;
  }

  if (format == "json") {
    json j;
    j["tasks"] = data.task_names;
    j["row_labels"] = data.row_labels;
    j["matrix"] = data.acc_rows;
    j["summary"] = json::parse(data.summary_text);
    json losses = json::array();
    for (const EpochLossSummary& s : epoch_losses) {
      json row;
      row["task"] = s.task;
      row["epoch"] = s.epoch;
      row["ce"] = s.ce;
      row["scl"] = s.scl ? json(*s.scl) : json(nullptr);
      row["kd"] = s.kd ? json(*s.kd) : json(nullptr);
      row["fd"] = s.fd ? json(*s.fd) : json(nullptr);
      row["total"] = s.total;
      losses.push_back(row);
    }
    j["losses_per_epoch"] = losses;
    std::cout << j.dump(2) << "\n";
    return kExitOk;
  }

  if (format == "md") {
    const json summary = json::parse(data.summary_text);
    std::cout << "# Run report: " << summary.value("method", "?") << " (seed "
              << summary.value("seed", 0ULL) << ")\n\n";
    std::cout << "## Accuracy matrix\n\n";
    std::cout << "| trained on |";
    for (const std::string& name : data.task_names) std::cout << " " << name << " |";
    std::cout << " AA | AF |\n|---|";
    for (std::size_t i = 0; i < data.task_names.size() + 2; ++i) std::cout << "---|";
    std::cout << "\n";
    const json boundaries = summary.at("boundaries");
    for (std::size_t r = 0; r < data.acc_rows.size(); ++r) {
      std::cout << "| " << data.row_labels[r] << " |";
      for (std::size_t c = 0; c < data.task_names.size(); ++c) {
        if (c < data.acc_rows[r].size()) {
          std::cout << " " << format_cell(data.acc_rows[r][c]) << " |";
        } else {
          std::cout << " - |";
        }
      }
      const json& b = boundaries.at(std::min(r, boundaries.size() - 1));
      std::cout << " " << format_cell(b.at("aa").get<double>()) << " |";
      if (b.at("af").is_null()) {
        std::cout << " - |\n";
      } else {
        std::cout << " " << format_cell(b.at("af").get<double>()) << " |\n";
      }
    }
    std::cout << "\n## Loss components (epoch means)\n\n";
    std::cout << "| task | epoch | ce | scl | kd | fd | total |\n"
              << "|---|---|---|---|---|---|---|\n";
    auto cell = [](const std::optional<double>& v) {
      return v ? format_cell(*v) : std::string("-");
    };
    for (const EpochLossSummary& s : epoch_losses) {
      std::cout << "| " << s.task << " | " << s.epoch << " | "
                << format_cell(s.ce) << " | " << cell(s.scl) << " | "
                << cell(s.kd) << " | " << cell(s.fd) << " | "
                << format_cell(s.total) << " |\n";
    }
    return kExitOk;
  }

  throw dfil::ParameterError("report: unknown format '" + format + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DFIL incremental-learning experiment harness"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand(
      "generate", "Sample a synthetic domain stream to CSV files");
  generate->add_option("--preset", gen.preset, "Built-in stream preset");
  generate->add_option("--spec", gen.spec_path, "Stream spec JSON file");
  generate->add_option("--out", gen.out, "Output directory");
  CLI::Option* gen_seed =
      generate->add_option("--seed", gen.seed, "Generation seed");
  generate->add_option("--dump-presets", gen.dump_presets,
                       "Write the preset catalog as presets.json and exit");

  TrainArgs train;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train on a generated stream");
  train_cmd->add_option("--data", train.data, "Stream directory")->required();
  train_cmd->add_option("--out", train.out, "Run output directory")->required();
  train_cmd->add_option("--method", train.method,
                        "dfil | ft | offline | er | lwf");
  train_cmd->add_option("--config", train.config_path, "Config JSON file");
  train_cmd->add_flag("--force", train.force, "Overwrite an existing run dir");
  train_cmd->add_option("--seed", train.seed, "Seed override");
  train_cmd->add_option("--epochs", train.epochs, "Epochs per task");
  train_cmd->add_option("--batch-size", train.batch_size, "Mini-batch size");
  train_cmd->add_option("--lr", train.lr, "Learning rate");
  train_cmd->add_option("--alpha", train.alpha, "Contrastive weight");
  train_cmd->add_option("--beta", train.beta, "Distillation weight");
  train_cmd->add_option("--gamma", train.gamma, "Feature-distillation weight");
  train_cmd->add_option("--kd-temperature", train.kd_temperature,
                        "Distillation temperature");
  train_cmd->add_option("--scl-temperature", train.scl_temperature,
                        "Contrastive temperature");
  train_cmd->add_option("--replay-size", train.replay_size,
                        "Replay samples per task (K)");
  train_cmd->add_option("--strategy", train.strategy,
                        "hard_center | all_hard | all_easy | all_margin | "
                        "all_center | random");
  train_cmd->add_flag("--no-replay", train.no_replay,
                      "Disable the replay set (ablation)");
  train_cmd->add_flag("--mean-reduction", train.mean_reduction,
                      "Average losses over the batch instead of summing");
  train_cmd->add_flag("--kd-t-squared", train.kd_t_squared,
                      "Scale the distillation term by T^2");
  train_cmd->add_flag("--carry-optimizer-state", train.carry_optimizer_state,
                      "Keep Adam moments across task boundaries");

  std::string suite = "all";
  CLI::App* verify = app.add_subcommand("verify", "Run oracle suites");
  verify->add_option("--suite", suite, "grad | losses | replay | metrics | all");

  std::string run_dir, format = "md";
  CLI::App* report = app.add_subcommand("report", "Render a run record");
  report->add_option("--run", run_dir, "Run directory")->required();
  report->add_option("--format", format, "csv | json | md");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*generate) {
      gen.seed_given = gen_seed->count() > 0;
      return cmd_generate(gen);
    }
    if (*train_cmd) return cmd_train(train);
    if (*verify) return cmd_verify(suite);
    if (*report) return cmd_report(run_dir, format);
  } catch (const dfil::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
