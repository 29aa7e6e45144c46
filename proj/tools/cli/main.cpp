// dwf: experiment runner for factorized sparse training.
//
//   dwf train|sweep|prune|lasso-verify|init-stats [--config PATH] [--out DIR]
//       [--seed U64] [--profile ci|paper] [--data-dir PATH]
//
// Each run writes into <out>/<command>-<config hash>/ and lists its files in
// manifest.json. Errors go to stderr as one JSON object.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dwf/dwf.hpp"

namespace fs = std::filesystem;
using namespace dwf;

namespace {

struct Options {
  std::string config_path;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
  std::string profile = "ci";
  std::string data_dir;
  bool quiet = false;
  // prune
  std::vector<std::string> prune_methods;
  std::optional<std::size_t> finetune_epochs;
  // init-stats
  std::optional<std::string> scheme;
  std::optional<std::size_t> depth;
  std::optional<double> sigma_w;
  std::optional<std::size_t> samples;
};

class RunDir {
 public:
  RunDir(const fs::path& out, const std::string& command, const ExperimentConfig& cfg)
      : command_(command), hash_(config_hash(cfg, command)), config_(config_to_json(cfg)) {
    path_ = out / (command + "-" + hash_);
    std::error_code ec;
    fs::create_directories(path_, ec);
    if (ec) fail(ErrorKind::Data, "cannot create output directory " + path_.string() + ": " + ec.message());
    write("config.json", config_.dump(2) + "\n");
  }

  void write(const std::string& name, const std::string& text) {
    write_text(path_ / name, text);
    artifacts_.push_back(name);
  }
  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }

  void finish(const std::string& status) {
    Json m{{"version", 1},
           {"command", command_},
           {"config_hash", hash_},
           {"status", status},
           {"artifacts", artifacts_}};
    write_text(path_ / "manifest.json", m.dump(2) + "\n");
  }

  const fs::path& path() const { return path_; }

 private:
  std::string command_;
  std::string hash_;
  Json config_;
  fs::path path_;
  std::vector<std::string> artifacts_;
};

ExperimentConfig resolve_config(const Options& opt) {
  Json j{{"version", ExperimentConfig::kVersion}};
  if (!opt.config_path.empty()) {
    std::string text;
    try {
      text = read_text(opt.config_path);
    } catch (const Error& e) {
      fail(ErrorKind::Config, "cannot read config: " + std::string(e.what()));
    }
    try {
      j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::Config, "config is not valid JSON: " + std::string(e.what()));
    }
  }
  ExperimentConfig c = config_from_json(j, profile_from_string(opt.profile));
  if (opt.seed) c.train.seed = *opt.seed;
  if (!opt.data_dir.empty()) {
    c.data.dir = opt.data_dir;
  } else if (c.data.dir.empty()) {
    if (const char* env = std::getenv("DWF_DATA_DIR")) c.data.dir = env;
  }
  if (!opt.prune_methods.empty()) c.prune.methods = opt.prune_methods;
  if (opt.finetune_epochs) c.prune.finetune_epochs = *opt.finetune_epochs;
  if (opt.scheme) c.init_stats.scheme = *opt.scheme;
  if (opt.depth) c.init_stats.depth = *opt.depth;
  if (opt.sigma_w) c.init_stats.sigma_w = *opt.sigma_w;
  if (opt.samples) c.init_stats.n = *opt.samples;
  // Round-trip so CLI overrides get the same validation as file values.
  return config_from_json(config_to_json(c));
}

void log_epoch(const EpochTrace& t) {
  std::cerr << "epoch " << t.epoch << " lr " << format_double(t.lr) << " loss " << format_double(t.train_loss)
            << " val_acc " << format_double(t.val_acc) << " cr " << format_double(t.cr) << "\n";
}

int cmd_train(const ExperimentConfig& c, const Options& opt) {
  const ExperimentData data = load_experiment_data(c);
  RunDir dir(opt.out, "train", c);
  TrainRun run;
  try {
    run = run_training(c, data, opt.quiet ? EpochCallback{} : EpochCallback{log_epoch});
  } catch (const TrainingDiverged& e) {
    dir.write("trace.csv", trace_to_csv(e.traces()));
    dir.write_json("trace.json", trace_to_json(e.traces()));
    dir.finish("diverged");
    throw;
  }
  dir.write("trace.csv", trace_to_csv(run.traces));
  dir.write_json("trace.json", trace_to_json(run.traces));
  dir.write_json("model.json", dense_to_json(run.sparse));
  if (run.factors) dir.write_json("checkpoint.json", checkpoint_to_json(*run.factors));
  Json report = sparsity_to_json(run.report);
  report["test_acc"] = json_number(run.test_acc);
  dir.write_json("report.json", report);
  dir.finish("ok");
  std::cout << dir.path().string() << "\n";
  return 0;
}

int cmd_sweep(const ExperimentConfig& c, const Options& opt) {
  const ExperimentData data = load_experiment_data(c);
  RunDir dir(opt.out, "sweep", c);
  const auto rows = run_sweep(c, data, [&](const SweepRow& r) {
    if (opt.quiet) return;
    std::cerr << r.method << " D=" << r.depth << " lambda=" << format_double(r.lambda) << " " << r.status
              << " test_acc " << format_double(r.test_acc) << " cr " << format_double(r.cr) << "\n";
  });
  dir.write("sweep.csv", sweep_to_csv(rows));
  dir.write_json("sweep.json", sweep_to_json(rows));
  dir.finish("ok");
  std::cout << dir.path().string() << "\n";
  return 0;
}

int cmd_prune(const ExperimentConfig& c, const Options& opt) {
  const ExperimentData data = load_experiment_data(c);
  RunDir dir(opt.out, "prune", c);
  const PruneResult res = run_prune(c, data, [&](const PruneRow& r) {
    if (opt.quiet) return;
    std::cerr << r.method << " cr " << format_double(r.target_cr) << " " << r.status << " test_acc "
              << format_double(r.test_acc) << "\n";
  });
  if (!res.dense_traces.empty()) dir.write("dense_trace.csv", trace_to_csv(res.dense_traces));
  for (const auto& method : c.prune.methods) {
    std::vector<PruneRow> rows;
    for (const auto& r : res.rows)
      if (r.method == method) rows.push_back(r);
    dir.write("curve_" + method + ".csv", prune_to_csv(rows));
  }
  dir.write_json("curves.json", prune_to_json(res.rows));
  for (const auto& [stem, traces] : res.traces) dir.write(stem + ".csv", trace_to_csv(traces));
  dir.finish("ok");
  std::cout << dir.path().string() << "\n";
  return 0;
}

int cmd_lasso_verify(const ExperimentConfig& c, const Options& opt) {
  RunDir dir(opt.out, "lasso-verify", c);
  const auto rows = run_lasso_verify(c.lasso, c.train.seed, c.train.eps_tiny);
  double max_gap = 0.0, max_mis = 0.0;
  std::size_t unconverged = 0, support = 0;
  for (const auto& r : rows) {
    max_gap = std::max(max_gap, r.gap);
    max_mis = std::max(max_mis, r.misalignment);
    unconverged += !r.converged;
    support += r.support_match;
  }
  dir.write("lasso_verify.csv", lasso_verify_to_csv(rows));
  dir.write_json("summary.json", Json{{"runs", rows.size()},
                                      {"max_gap", json_number(max_gap)},
                                      {"max_misalignment", json_number(max_mis)},
                                      {"unconverged", unconverged},
                                      {"support_match", support}});
  dir.finish("ok");
  if (!opt.quiet)
    std::cerr << "runs " << rows.size() << " max_gap " << format_double(max_gap) << " max_misalignment "
              << format_double(max_mis) << " unconverged " << unconverged << "\n";
  std::cout << dir.path().string() << "\n";
  return 0;
}

int cmd_init_stats(const ExperimentConfig& c, const Options& opt) {
  RunDir dir(opt.out, "init-stats", c);
  const InitStats s = run_init_stats(c.init_stats, c.train.seed, c.train.eps_tiny);
  const Json j = init_stats_to_json(c.init_stats, s);
  dir.write_json("init_stats.json", j);
  dir.finish("ok");
  if (!opt.quiet) std::cerr << j.dump() << "\n";
  std::cout << dir.path().string() << "\n";
  return 0;
}

void print_error(std::string_view kind, const std::string& message) {
  std::cerr << Json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse training with deep weight factorization"};
  app.require_subcommand(1);
  Options opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Experiment config JSON");
    sub->add_option("--out", opt.out, "Output root directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "Base seed (overrides the config)");
    sub->add_option("--profile", opt.profile, "Epoch budget profile")
        ->check(CLI::IsMember({"ci", "paper"}))
        ->capture_default_str();
    sub->add_option("--data-dir", opt.data_dir, "MNIST directory (falls back to DWF_DATA_DIR)");
    sub->add_flag("-q,--quiet", opt.quiet, "No progress output");
  };
  auto* train_cmd = app.add_subcommand("train", "Train one model and write its trace");
  auto* sweep_cmd = app.add_subcommand("sweep", "Lambda sweep over depths and methods");
  auto* prune_cmd = app.add_subcommand("prune", "Pruning-baseline curves");
  auto* lasso_cmd = app.add_subcommand("lasso-verify", "Factorized vs coordinate-descent lasso");
  auto* init_cmd = app.add_subcommand("init-stats", "Statistics of a factor initialization");
  for (auto* s : {train_cmd, sweep_cmd, prune_cmd, lasso_cmd, init_cmd}) common(s);
  prune_cmd->add_option("--method", opt.prune_methods, "gmp, random, snip, synflow or posthoc (repeatable)");
  prune_cmd->add_option("--finetune-epochs", opt.finetune_epochs, "Training epochs after the GMP prune");
  init_cmd->add_option("--scheme", opt.scheme, "standard, varmatch, dwf, root or gpf");
  init_cmd->add_option("--depth", opt.depth, "Number of factors");
  init_cmd->add_option("--sigma-w", opt.sigma_w, "Target standard deviation of the product");
  init_cmd->add_option("-n,--samples", opt.samples, "Number of sampled weights");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(to_string(ErrorKind::Config), e.what());
    return exit_code(ErrorKind::Config);
  }

  try {
    const ExperimentConfig cfg = resolve_config(opt);
    if (*train_cmd) return cmd_train(cfg, opt);
    if (*sweep_cmd) return cmd_sweep(cfg, opt);
    if (*prune_cmd) return cmd_prune(cfg, opt);
    if (*lasso_cmd) return cmd_lasso_verify(cfg, opt);
    return cmd_init_stats(cfg, opt);
  } catch (const Error& e) {
    print_error(to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
}
