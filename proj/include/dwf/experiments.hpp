#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dwf/core/error.hpp"
#include "dwf/core/rng.hpp"
#include "dwf/core/stats.hpp"
#include "dwf/data.hpp"
#include "dwf/init.hpp"
#include "dwf/io.hpp"
#include "dwf/lasso.hpp"
#include "dwf/metrics.hpp"
#include "dwf/model.hpp"
#include "dwf/optimizer.hpp"
#include "dwf/pruning.hpp"

namespace dwf {

// ---- configuration -----------------------------------------------------------

enum class Profile { Ci, Paper };

inline std::size_t profile_epochs(Profile p) { return p == Profile::Paper ? 75 : 30; }

inline Profile profile_from_string(const std::string& s) {
  if (s == "ci") return Profile::Ci;
  if (s == "paper") return Profile::Paper;
  fail(ErrorKind::Config, "unknown profile '" + s + "' (expected ci or paper)");
}

struct DataConfig {
  std::string source = "mnist";  // mnist | blobs
  std::string dir;               // MNIST directory
  std::size_t train_limit = 0;   // 0 = all rows
  std::size_t test_limit = 0;
  double val_fraction = 0.0;     // held out from train, seeded
  // blobs
  std::size_t n_train = 600;
  std::size_t n_test = 300;
  std::size_t classes = 3;
  std::size_t features = 8;
  double separation = 3.0;
};

struct SweepConfig {
  double lambda_min = 1e-6;
  double lambda_max = 1e-1;
  std::size_t count = 12;
  std::vector<std::size_t> depths{2, 3};
  std::vector<std::string> methods{"dwf"};  // dwf | vanilla_l1
};

struct PruneConfig {
  std::vector<std::string> methods{"gmp", "random", "snip", "synflow", "posthoc"};
  std::vector<double> cr_list;     // empty = 15 log-spaced values in [1e1, 1e5]
  std::size_t finetune_epochs = 10;  // gmp retraining after the one-shot prune
  double finetune_lr = 0.015;
  std::size_t synflow_iterations = 100;
  std::size_t snip_batch = 256;
};

struct LassoVerifyConfig {
  std::size_t seeds = 20;
  std::size_t n = 50;
  std::size_t p = 10;
  std::size_t k = 3;
  double noise = 0.1;
  std::vector<double> lambda_fractions{0.05, 0.2, 0.5};  // of lambda_max
  std::size_t depth = 2;
};

struct InitStatsConfig {
  std::string scheme = "varmatch";
  std::size_t depth = 2;
  double sigma_w = 0.1;
  std::size_t n = 100000;
  std::size_t k_max = 5;
  double eps = 3e-3;
};

struct ExperimentConfig {
  static constexpr int kVersion = 1;
  MlpSpec model = MlpSpec::lenet_300_100();
  DataConfig data;
  TrainConfig train;
  std::string method = "dwf";  // train command: dwf | vanilla_l1 | dense
  SweepConfig sweep;
  PruneConfig prune;
  LassoVerifyConfig lasso;
  InitStatsConfig init_stats;
};

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::Config, where + ": expected a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) fail(ErrorKind::Config, where + ": unknown field '" + key + "'");
}

template <typename T>
void read_field(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Config, where + "." + key + ": wrong type");
  }
}

inline InitScheme scheme_from_string(const std::string& s, double eps, std::size_t k_max) {
  if (s == "standard") return StandardInit{};
  if (s == "varmatch") return VarMatchInit{};
  if (s == "dwf") return DwfTruncatedInit{eps};
  if (s == "root") return RootInit{};
  if (s == "gpf") return GpfTruncatedInit{k_max};
  fail(ErrorKind::Config, "unknown init scheme '" + s + "'");
}

inline VarianceRule rule_from_string(const std::string& s) {
  if (s == "lecun") return VarianceRule::LeCun;
  if (s == "kaiming") return VarianceRule::Kaiming;
  if (s == "glorot") return VarianceRule::Glorot;
  fail(ErrorKind::Config, "unknown variance rule '" + s + "'");
}

inline std::string rule_name(VarianceRule r) {
  switch (r) {
    case VarianceRule::LeCun: return "lecun";
    case VarianceRule::Kaiming: return "kaiming";
    case VarianceRule::Glorot: return "glorot";
  }
  return "lecun";
}

}  // namespace detail

/// Log-spaced grid of `count` values from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  require(count >= 2, ErrorKind::Config, "log_grid: count must be >= 2");
  require(lo > 0.0 && hi > lo, ErrorKind::Config, "log_grid: need 0 < lo < hi");
  std::vector<double> out(count);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

inline std::vector<double> default_cr_list() { return log_grid(1e1, 1e5, 15); }

/// Parses a versioned experiment config. Unknown fields anywhere are config
/// errors. `train.epochs` defaults to the profile's epoch budget.
inline ExperimentConfig config_from_json(const Json& j, Profile profile = Profile::Ci) {
  using detail::check_keys;
  using detail::read_field;
  check_keys(j, {"version", "seed", "model", "data", "train", "sweep", "prune", "lasso", "init_stats"}, "config");
  if (!j.contains("version")) fail(ErrorKind::Config, "config: missing 'version'");
  int version = 0;
  read_field(j, "version", version, "config");
  if (version != ExperimentConfig::kVersion)
    fail(ErrorKind::Config, "config: unsupported version " + std::to_string(version));

  ExperimentConfig c;
  c.train.epochs = profile_epochs(profile);
  read_field(j, "seed", c.train.seed, "config");

  if (j.contains("model")) {
    const Json& m = j["model"];
    check_keys(m, {"layer_sizes", "activation", "loss"}, "model");
    if (!m.contains("layer_sizes")) fail(ErrorKind::Config, "model: missing 'layer_sizes'");
    try {
      c.model = spec_from_json(m);
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::Config, "model: malformed");
    }
  }

  if (j.contains("data")) {
    const Json& d = j["data"];
    check_keys(d, {"source", "dir", "train_limit", "test_limit", "val_fraction", "n_train", "n_test",
                   "classes", "features", "separation"},
               "data");
    auto& dc = c.data;
    read_field(d, "source", dc.source, "data");
    read_field(d, "dir", dc.dir, "data");
    read_field(d, "train_limit", dc.train_limit, "data");
    read_field(d, "test_limit", dc.test_limit, "data");
    read_field(d, "val_fraction", dc.val_fraction, "data");
    read_field(d, "n_train", dc.n_train, "data");
    read_field(d, "n_test", dc.n_test, "data");
    read_field(d, "classes", dc.classes, "data");
    read_field(d, "features", dc.features, "data");
    read_field(d, "separation", dc.separation, "data");
  }
  require(c.data.source == "mnist" || c.data.source == "blobs", ErrorKind::Config,
          "data.source must be mnist or blobs");
  require(c.data.val_fraction >= 0.0 && c.data.val_fraction < 1.0, ErrorKind::Config,
          "data.val_fraction must be in [0, 1)");

  if (j.contains("train")) {
    const Json& t = j["train"];
    check_keys(t, {"method", "depth", "lambda", "epochs", "batch_size", "momentum", "lr", "schedule",
                   "milestones", "gamma", "init", "init_eps", "gpf_k_max", "factor_init_rule",
                   "dense_init_rule", "eps_tiny"},
               "train");
    auto& tc = c.train;
    read_field(t, "method", c.method, "train");
    read_field(t, "depth", tc.depth, "train");
    read_field(t, "lambda", tc.lambda, "train");
    read_field(t, "epochs", tc.epochs, "train");
    read_field(t, "batch_size", tc.batch_size, "train");
    read_field(t, "momentum", tc.momentum, "train");
    read_field(t, "eps_tiny", tc.eps_tiny, "train");
    double lr = 0.15;
    std::string schedule = "cosine";
    std::vector<std::size_t> milestones;
    double gamma = 0.1;
    read_field(t, "lr", lr, "train");
    read_field(t, "schedule", schedule, "train");
    read_field(t, "milestones", milestones, "train");
    read_field(t, "gamma", gamma, "train");
    if (schedule == "cosine") tc.schedule = CosineLr{lr, 0};
    else if (schedule == "step") tc.schedule = StepDecayLr{lr, milestones, gamma};
    else if (schedule == "constant") tc.schedule = ConstantLr{lr};
    else fail(ErrorKind::Config, "train.schedule must be cosine, step or constant");
    std::string init = "dwf";
    double eps = 3e-3;
    std::size_t k_max = 5;
    read_field(t, "init", init, "train");
    read_field(t, "init_eps", eps, "train");
    read_field(t, "gpf_k_max", k_max, "train");
    tc.init = detail::scheme_from_string(init, eps, k_max);
    std::string fr = "lecun", dr = "kaiming";
    read_field(t, "factor_init_rule", fr, "train");
    read_field(t, "dense_init_rule", dr, "train");
    tc.factor_init_rule = detail::rule_from_string(fr);
    tc.dense_init_rule = detail::rule_from_string(dr);
  }
  require(c.method == "dwf" || c.method == "vanilla_l1" || c.method == "dense", ErrorKind::Config,
          "train.method must be dwf, vanilla_l1 or dense");
  c.train.validate();

  if (j.contains("sweep")) {
    const Json& s = j["sweep"];
    check_keys(s, {"lambda_min", "lambda_max", "count", "depths", "methods"}, "sweep");
    read_field(s, "lambda_min", c.sweep.lambda_min, "sweep");
    read_field(s, "lambda_max", c.sweep.lambda_max, "sweep");
    read_field(s, "count", c.sweep.count, "sweep");
    read_field(s, "depths", c.sweep.depths, "sweep");
    read_field(s, "methods", c.sweep.methods, "sweep");
  }
  require(c.sweep.count >= 2, ErrorKind::Config, "sweep.count must be >= 2");
  for (std::size_t d : c.sweep.depths) require(d >= 2, ErrorKind::Config, "sweep.depths must be >= 2");
  for (const auto& m : c.sweep.methods)
    require(m == "dwf" || m == "vanilla_l1", ErrorKind::Config, "sweep.methods: unknown method '" + m + "'");

  if (j.contains("prune")) {
    const Json& p = j["prune"];
    check_keys(p, {"methods", "cr_list", "finetune_epochs", "finetune_lr", "synflow_iterations", "snip_batch"},
               "prune");
    read_field(p, "methods", c.prune.methods, "prune");
    read_field(p, "cr_list", c.prune.cr_list, "prune");
    read_field(p, "finetune_epochs", c.prune.finetune_epochs, "prune");
    read_field(p, "finetune_lr", c.prune.finetune_lr, "prune");
    read_field(p, "synflow_iterations", c.prune.synflow_iterations, "prune");
    read_field(p, "snip_batch", c.prune.snip_batch, "prune");
  }
  if (c.prune.cr_list.empty()) c.prune.cr_list = default_cr_list();
  std::sort(c.prune.cr_list.begin(), c.prune.cr_list.end());
  for (double cr : c.prune.cr_list) require(cr >= 1.0, ErrorKind::Config, "prune.cr_list values must be >= 1");
  for (const auto& m : c.prune.methods) {
    require(m == "gmp" || m == "random" || m == "snip" || m == "synflow" || m == "posthoc",
            ErrorKind::Config, "prune.methods: unknown method '" + m + "'");
  }

  if (j.contains("lasso")) {
    const Json& l = j["lasso"];
    check_keys(l, {"seeds", "n", "p", "k", "noise", "lambda_fractions", "depth"}, "lasso");
    read_field(l, "seeds", c.lasso.seeds, "lasso");
    read_field(l, "n", c.lasso.n, "lasso");
    read_field(l, "p", c.lasso.p, "lasso");
    read_field(l, "k", c.lasso.k, "lasso");
    read_field(l, "noise", c.lasso.noise, "lasso");
    read_field(l, "lambda_fractions", c.lasso.lambda_fractions, "lasso");
    read_field(l, "depth", c.lasso.depth, "lasso");
  }

  if (j.contains("init_stats")) {
    const Json& s = j["init_stats"];
    check_keys(s, {"scheme", "depth", "sigma_w", "n", "k_max", "eps"}, "init_stats");
    read_field(s, "scheme", c.init_stats.scheme, "init_stats");
    read_field(s, "depth", c.init_stats.depth, "init_stats");
    read_field(s, "sigma_w", c.init_stats.sigma_w, "init_stats");
    read_field(s, "n", c.init_stats.n, "init_stats");
    read_field(s, "k_max", c.init_stats.k_max, "init_stats");
    read_field(s, "eps", c.init_stats.eps, "init_stats");
  }
  return c;
}

/// Fully resolved config, every default spelled out.
inline Json config_to_json(const ExperimentConfig& c) {
  const auto& t = c.train;
  Json train{{"method", c.method},
             {"depth", t.depth},
             {"lambda", t.lambda},
             {"epochs", t.epochs},
             {"batch_size", t.batch_size},
             {"momentum", t.momentum}};
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        train["lr"] = s.eta0;
        if constexpr (std::is_same_v<S, CosineLr>) train["schedule"] = "cosine";
        if constexpr (std::is_same_v<S, ConstantLr>) train["schedule"] = "constant";
        if constexpr (std::is_same_v<S, StepDecayLr>) {
          train["schedule"] = "step";
          train["milestones"] = s.milestones;
          train["gamma"] = s.gamma;
        }
      },
      t.schedule);
  train["init"] = scheme_name(t.init);
  if (const auto* d = std::get_if<DwfTruncatedInit>(&t.init)) train["init_eps"] = d->eps;
  if (const auto* g = std::get_if<GpfTruncatedInit>(&t.init)) train["gpf_k_max"] = g->k_max;
  train["factor_init_rule"] = detail::rule_name(t.factor_init_rule);
  train["dense_init_rule"] = detail::rule_name(t.dense_init_rule);
  train["eps_tiny"] = t.eps_tiny;

  const auto& d = c.data;
  Json data{{"source", d.source}, {"dir", d.dir}, {"val_fraction", d.val_fraction}};
  if (d.source == "mnist") {
    data["train_limit"] = d.train_limit;
    data["test_limit"] = d.test_limit;
  } else {
    data["n_train"] = d.n_train;
    data["n_test"] = d.n_test;
    data["classes"] = d.classes;
    data["features"] = d.features;
    data["separation"] = d.separation;
  }
  return Json{{"version", ExperimentConfig::kVersion},
              {"seed", t.seed},
              {"model", spec_to_json(c.model)},
              {"data", std::move(data)},
              {"train", std::move(train)},
              {"sweep",
               {{"lambda_min", c.sweep.lambda_min},
                {"lambda_max", c.sweep.lambda_max},
                {"count", c.sweep.count},
                {"depths", c.sweep.depths},
                {"methods", c.sweep.methods}}},
              {"prune",
               {{"methods", c.prune.methods},
                {"cr_list", c.prune.cr_list},
                {"finetune_epochs", c.prune.finetune_epochs},
                {"finetune_lr", c.prune.finetune_lr},
                {"synflow_iterations", c.prune.synflow_iterations},
                {"snip_batch", c.prune.snip_batch}}},
              {"lasso",
               {{"seeds", c.lasso.seeds},
                {"n", c.lasso.n},
                {"p", c.lasso.p},
                {"k", c.lasso.k},
                {"noise", c.lasso.noise},
                {"lambda_fractions", c.lasso.lambda_fractions},
                {"depth", c.lasso.depth}}},
              {"init_stats",
               {{"scheme", c.init_stats.scheme},
                {"depth", c.init_stats.depth},
                {"sigma_w", c.init_stats.sigma_w},
                {"n", c.init_stats.n},
                {"k_max", c.init_stats.k_max},
                {"eps", c.init_stats.eps}}}};
}

/// 8 hex digits identifying a resolved config for a command. The data
/// directory is excluded so the key does not depend on where MNIST lives.
inline std::string config_hash(const ExperimentConfig& c, const std::string& command) {
  Json j = config_to_json(c);
  j["data"].erase("dir");
  const std::string text = command + "\n" + j.dump();
  const uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

// ---- data --------------------------------------------------------------------

struct ExperimentData {
  Dataset train;
  Dataset val;  // empty unless data.val_fraction > 0
  Dataset test;
};

/// Loads or generates the configured data. Stream seed/3 splits off validation;
/// seed/4 generates synthetic blobs.
inline ExperimentData load_experiment_data(const ExperimentConfig& c) {
  const auto& d = c.data;
  const SeededRng root(c.train.seed);
  ExperimentData out;
  if (d.source == "mnist") {
    require(!d.dir.empty(), ErrorKind::Data, "no MNIST directory: pass --data-dir or set DWF_DATA_DIR");
    out.train = load_mnist(d.dir, "train");
    out.test = load_mnist(d.dir, "test");
    if (d.train_limit) out.train = head(out.train, d.train_limit);
    if (d.test_limit) out.test = head(out.test, d.test_limit);
  } else {
    SeededRng rng = root.child({4});
    const Dataset all = make_blobs(d.n_train + d.n_test, d.classes, d.features, d.separation, rng);
    std::vector<std::size_t> tr(d.n_train), te(d.n_test);
    for (std::size_t i = 0; i < d.n_train; ++i) tr[i] = i;
    for (std::size_t i = 0; i < d.n_test; ++i) te[i] = d.n_train + i;
    out.train = subset(all, tr, "train");
    out.test = subset(all, te, "test");
  }
  if (d.val_fraction > 0.0) {
    SeededRng rng = root.child({3});
    auto split = split_dataset(out.train, d.val_fraction, rng);
    out.train = std::move(split.train);
    out.val = std::move(split.val);
  }
  require(out.train.inputs.cols() == c.model.input_size(), ErrorKind::Config,
          "data has " + std::to_string(out.train.inputs.cols()) + " features, model expects " +
              std::to_string(c.model.input_size()));
  return out;
}

// ---- train -------------------------------------------------------------------

struct TrainRun {
  std::vector<EpochTrace> traces;
  DenseMlp sparse;                     // thresholded collapsed (or dense) model
  std::optional<FactorizedMlp> factors;  // dwf only
  SparsityReport report;
  double test_acc = std::numeric_limits<double>::quiet_NaN();
};

/// One training run of the configured method. Validation traces use data.val
/// when present and the test set otherwise.
inline TrainRun run_training(const ExperimentConfig& c, const ExperimentData& data,
                             const EpochCallback& on_epoch = {}) {
  const Dataset& monitor = data.val.size() ? data.val : data.test;
  TrainRun run;
  if (c.method == "dwf") {
    TrainResult r = train(c.model, c.train, data.train, monitor, on_epoch);
    run.traces = std::move(r.traces);
    run.sparse = collapse_and_threshold(r.model, c.train.eps_tiny);
    run.report = sparsity_report(run.sparse, &r.model);
    run.factors = std::move(r.model);
  } else {
    DenseTrainResult r = c.method == "vanilla_l1"
                             ? train_vanilla_l1(c.model, c.train, data.train, monitor, on_epoch)
                             : train_dense(baseline_init(c.model, c.train), c.train, data.train, monitor, {},
                                           on_epoch);
    run.traces = std::move(r.traces);
    run.sparse = std::move(r.model);
    threshold_in_place(run.sparse, c.train.eps_tiny);
    run.report = sparsity_report(run.sparse);
  }
  if (data.test.size() && data.test.is_classification())
    run.test_acc = accuracy(run.sparse, data.test.inputs, data.test.labels);
  return run;
}

// ---- sweep -------------------------------------------------------------------

struct SweepRow {
  std::string method;
  std::size_t depth = 0;  // 1 for vanilla_l1
  std::size_t lambda_index = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::string error;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double val_acc = std::numeric_limits<double>::quiet_NaN();
  double test_acc = std::numeric_limits<double>::quiet_NaN();
  double cr = std::numeric_limits<double>::quiet_NaN();
  double zero_fraction = std::numeric_limits<double>::quiet_NaN();
  double collapsed_l2 = std::numeric_limits<double>::quiet_NaN();
  double misalignment = std::numeric_limits<double>::quiet_NaN();
  bool pareto = false;
};

/// Flags rows not dominated in (test_acc, cr) by another successful row.
inline void mark_pareto(std::vector<SweepRow>& rows) {
  for (auto& r : rows) {
    r.pareto = false;
    if (r.status != "ok") continue;
    bool dominated = false;
    for (const auto& o : rows) {
      if (&o == &r || o.status != "ok") continue;
      if (o.test_acc >= r.test_acc && o.cr >= r.cr && (o.test_acc > r.test_acc || o.cr > r.cr)) {
        dominated = true;
        break;
      }
    }
    r.pareto = !dominated;
  }
}

using SweepCallback = std::function<void(const SweepRow&)>;

/// One run per (method, depth, lambda). Row seeds are derive_seed(seed, {depth, index});
/// a failed row is recorded and the sweep continues.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& c, const ExperimentData& data,
                                       const SweepCallback& on_row = {}) {
  const auto grid = log_grid(c.sweep.lambda_min, c.sweep.lambda_max, c.sweep.count);
  std::vector<SweepRow> rows;
  for (const auto& method : c.sweep.methods) {
    const std::vector<std::size_t> depths = method == "dwf" ? c.sweep.depths : std::vector<std::size_t>{1};
    for (std::size_t depth : depths) {
      for (std::size_t i = 0; i < grid.size(); ++i) {
        SweepRow row;
        row.method = method;
        row.depth = depth;
        row.lambda_index = i;
        row.lambda = grid[i];
        row.seed = derive_seed(c.train.seed, {depth, i});
        ExperimentConfig rc = c;
        rc.method = method;
        rc.train.lambda = grid[i];
        rc.train.seed = row.seed;
        if (method == "dwf") rc.train.depth = depth;
        try {
          const TrainRun run = run_training(rc, data);
          row.train_loss = run.traces.back().train_loss;
          row.val_acc = data.val.size() ? run.traces.back().val_acc : std::numeric_limits<double>::quiet_NaN();
          row.test_acc = run.test_acc;
          row.cr = run.report.compression_ratio;
          row.zero_fraction = run.report.sparsity;
          row.collapsed_l2 = run.report.collapsed_l2;
          row.misalignment = run.report.misalignment_total.value_or(0.0);
        } catch (const Error& e) {
          row.status = std::string(to_string(e.kind()));
          row.error = e.what();
        }
        rows.push_back(row);
        if (on_row) on_row(row);
      }
    }
  }
  mark_pareto(rows);
  return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "method,depth,lambda_index,lambda,seed,status,train_loss,val_acc,test_acc,cr,zero_fraction,"
      "l2_collapsed,misalignment,pareto\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.depth) + "," + std::to_string(r.lambda_index) + "," +
           format_double(r.lambda) + "," + std::to_string(r.seed) + "," + r.status;
    for (double v : {r.train_loss, r.val_acc, r.test_acc, r.cr, r.zero_fraction, r.collapsed_l2, r.misalignment})
      out += "," + format_double(v);
    out += r.pareto ? ",1\n" : ",0\n";
  }
  return out;
}

inline Json sweep_to_json(const std::vector<SweepRow>& rows) {
  Json arr = Json::array();
  for (const auto& r : rows) {
    Json j{{"method", r.method},
           {"depth", r.depth},
           {"lambda_index", r.lambda_index},
           {"lambda", json_number(r.lambda)},
           {"seed", r.seed},
           {"status", r.status},
           {"train_loss", json_number(r.train_loss)},
           {"val_acc", json_number(r.val_acc)},
           {"test_acc", json_number(r.test_acc)},
           {"cr", json_number(r.cr)},
           {"zero_fraction", json_number(r.zero_fraction)},
           {"l2_collapsed", json_number(r.collapsed_l2)},
           {"misalignment", json_number(r.misalignment)},
           {"pareto", r.pareto}};
    if (!r.error.empty()) j["error"] = r.error;
    arr.push_back(std::move(j));
  }
  return arr;
}

// ---- prune -------------------------------------------------------------------

struct PruneRow {
  std::string method;
  double target_cr = 1.0;
  std::size_t kept = 0;
  double achieved_cr = std::numeric_limits<double>::quiet_NaN();
  double test_acc = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
  std::string error;
};

struct PruneResult {
  std::vector<PruneRow> rows;
  std::vector<EpochTrace> dense_traces;  // empty when no method needs a trained dense model
  double dense_test_acc = std::numeric_limits<double>::quiet_NaN();
  /// (file stem, traces) for every retraining run.
  std::vector<std::pair<std::string, std::vector<EpochTrace>>> traces;
};

inline std::string cr_label(double cr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", cr);
  return buf;
}

using PruneCallback = std::function<void(const PruneRow&)>;

/// Baseline pruning curves. Dense training and every prune-at-init mask use the
/// seeded baseline init (stream seed/1); random masks use seed/5/i and the SNIP
/// batch seed/6. GMP prunes the trained dense model once and retrains for
/// prune.finetune_epochs on a cosine schedule from prune.finetune_lr (skipped
/// when the mask keeps everything).
inline PruneResult run_prune(const ExperimentConfig& c, const ExperimentData& data,
                             const PruneCallback& on_row = {}) {
  const Dataset& monitor = data.val.size() ? data.val : data.test;
  const SeededRng root(c.train.seed);
  const DenseMlp init = baseline_init(c.model, c.train);
  PruneResult out;
  const auto& methods = c.prune.methods;
  const bool need_dense = std::count(methods.begin(), methods.end(), "gmp") ||
                          std::count(methods.begin(), methods.end(), "posthoc");
  DenseMlp trained;
  if (need_dense) {
    DenseTrainResult r = train_dense(init, c.train, data.train, monitor);
    out.dense_traces = std::move(r.traces);
    trained = std::move(r.model);
    out.dense_test_acc = accuracy(trained, data.test.inputs, data.test.labels);
  }
  Batch snip_batch;
  if (std::count(methods.begin(), methods.end(), "snip")) {
    SeededRng rng = root.child({6});
    auto perm = random_permutation(data.train.size(), rng);
    perm.resize(std::min(c.prune.snip_batch, perm.size()));
    snip_batch = gather(data.train, perm);
  }
  TrainConfig finetune = c.train;
  finetune.epochs = c.prune.finetune_epochs;
  finetune.schedule = CosineLr{c.prune.finetune_lr, 0};

  auto finish = [&](PruneRow& row, DenseMlp model) {
    threshold_in_place(model, c.train.eps_tiny);
    const auto rep = sparsity_report(model);
    row.achieved_cr = rep.compression_ratio;
    row.test_acc = accuracy(model, data.test.inputs, data.test.labels);
  };

  for (const auto& method : methods) {
    for (std::size_t i = 0; i < c.prune.cr_list.size(); ++i) {
      const double cr = c.prune.cr_list[i];
      PruneRow row;
      row.method = method;
      row.target_cr = cr;
      const std::string stem = "prune_" + method + "_cr" + cr_label(cr);
      try {
        PruneMask mask;
        if (method == "gmp" || method == "posthoc") {
          mask = magnitude_mask(trained, CompressionTarget{cr});
        } else if (method == "random") {
          SeededRng rng = root.child({5, i});
          mask = random_mask(init, CompressionTarget{cr}, rng);
        } else if (method == "snip") {
          mask = snip_mask(init, snip_batch.inputs, snip_batch.targets, CompressionTarget{cr});
        } else {
          mask = synflow_prune(init, CompressionTarget{cr}, c.prune.synflow_iterations);
        }
        row.kept = mask.kept();
        const bool keeps_all = row.kept == mask.total();
        if (method == "posthoc" || (method == "gmp" && (c.prune.finetune_epochs == 0 || keeps_all))) {
          DenseMlp pruned = trained;
          apply_mask(mask, pruned.tensors());
          finish(row, std::move(pruned));
        } else if (method == "gmp") {
          DenseTrainResult r = apply_mask_and_train(trained, mask, finetune, data.train, monitor);
          out.traces.emplace_back(stem, std::move(r.traces));
          finish(row, std::move(r.model));
        } else {
          DenseTrainResult r = apply_mask_and_train(init, mask, c.train, data.train, monitor);
          out.traces.emplace_back(stem, std::move(r.traces));
          finish(row, std::move(r.model));
        }
      } catch (const Error& e) {
        row.status = std::string(to_string(e.kind()));
        row.error = e.what();
      }
      out.rows.push_back(row);
      if (on_row) on_row(row);
    }
  }
  return out;
}

inline std::string prune_to_csv(const std::vector<PruneRow>& rows) {
  std::string out = "method,target_cr,kept,achieved_cr,test_acc,status\n";
  for (const auto& r : rows) {
    out += r.method + "," + format_double(r.target_cr) + "," + std::to_string(r.kept) + "," +
           format_double(r.achieved_cr) + "," + format_double(r.test_acc) + "," + r.status + "\n";
  }
  return out;
}

inline Json prune_to_json(const std::vector<PruneRow>& rows) {
  Json arr = Json::array();
  for (const auto& r : rows) {
    Json j{{"method", r.method},
           {"target_cr", json_number(r.target_cr)},
           {"kept", r.kept},
           {"achieved_cr", json_number(r.achieved_cr)},
           {"test_acc", json_number(r.test_acc)},
           {"status", r.status}};
    if (!r.error.empty()) j["error"] = r.error;
    arr.push_back(std::move(j));
  }
  return arr;
}

// ---- lasso verification ----------------------------------------------------------

struct LassoVerifyRow {
  std::size_t problem = 0;
  double lambda_fraction = 0.0;
  double lambda = 0.0;
  double objective_cd = 0.0;
  double objective_factorized = 0.0;
  double gap = 0.0;  // |difference| / (1 + |objective_cd|)
  double misalignment = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  bool support_match = false;
};

/// Factorized gradient descent against coordinate descent on seeded synthetic
/// problems. Problem s draws from derive_seed(seed, {s}); the factor init of
/// (s, j) uses derive_seed(seed, {s, j}).
inline std::vector<LassoVerifyRow> run_lasso_verify(const LassoVerifyConfig& c, std::uint64_t seed,
                                                    double eps_tiny = kFloat32Epsilon) {
  std::vector<LassoVerifyRow> rows;
  for (std::size_t s = 0; s < c.seeds; ++s) {
    SeededRng rng(derive_seed(seed, {s}));
    const auto reg = synth_sparse_regression(c.n, c.p, c.k, c.noise, rng);
    const std::vector<double> y(reg.data.targets.values().begin(), reg.data.targets.values().end());
    const double lmax = lasso_lambda_max(reg.data.inputs, y);
    for (std::size_t j = 0; j < c.lambda_fractions.size(); ++j) {
      LassoVerifyRow row;
      row.problem = s;
      row.lambda_fraction = c.lambda_fractions[j];
      row.lambda = row.lambda_fraction * lmax;
      const auto cd = lasso_cd(reg.data.inputs, y, row.lambda);
      FactorizedLassoConfig fc;
      fc.depth = c.depth;
      fc.seed = derive_seed(seed, {s, j});
      const auto fl = factorized_lasso_train(reg.data.inputs, y, row.lambda, fc);
      row.objective_cd = cd.objective;
      row.objective_factorized = fl.objective;
      row.gap = std::abs(fl.objective - cd.objective) / (1.0 + std::abs(cd.objective));
      row.misalignment = fl.misalignment;
      row.converged = fl.converged;
      row.iterations = fl.iterations;
      row.support_match = true;
      for (std::size_t k = 0; k < c.p; ++k)
        row.support_match = row.support_match && ((std::abs(fl.coef[k]) >= eps_tiny) == (cd.coef[k] != 0.0));
      rows.push_back(row);
    }
  }
  return rows;
}

inline std::string lasso_verify_to_csv(const std::vector<LassoVerifyRow>& rows) {
  std::string out =
      "problem,lambda_fraction,lambda,objective_cd,objective_factorized,gap,misalignment,converged,"
      "iterations,support_match\n";
  for (const auto& r : rows) {
    out += std::to_string(r.problem) + "," + format_double(r.lambda_fraction) + "," + format_double(r.lambda) +
           "," + format_double(r.objective_cd) + "," + format_double(r.objective_factorized) + "," +
           format_double(r.gap) + "," + format_double(r.misalignment) + "," + (r.converged ? "1" : "0") + "," +
           std::to_string(r.iterations) + "," + (r.support_match ? "1" : "0") + "\n";
  }
  return out;
}

// ---- init statistics ------------------------------------------------------------

struct InitStats {
  double mean = 0.0;
  double variance = 0.0;
  double kurtosis = 0.0;
  double min_abs = 0.0;
  double max_abs = 0.0;
  double ks_statistic = 0.0;
  double ks_p_value = 0.0;
  double dead_fraction = 0.0;  // |w| < eps_tiny
};

inline InitStats run_init_stats(const InitStatsConfig& c, std::uint64_t seed, double eps_tiny = kFloat32Epsilon) {
  require(c.n >= 10000, ErrorKind::Config, "init_stats.n must be >= 10000");
  const InitScheme scheme = detail::scheme_from_string(c.scheme, c.eps, c.k_max);
  SeededRng rng(seed);
  const auto factors = sample_factor_weights(c.sigma_w, scheme, c.depth, c.n, rng);
  std::vector<double> w(factors[0]);
  for (std::size_t d = 1; d < factors.size(); ++d)
    for (std::size_t j = 0; j < w.size(); ++j) w[j] *= factors[d][j];
  InitStats s;
  const auto m = stats::moments(w);
  s.mean = m.mean;
  s.variance = m.variance;
  s.kurtosis = m.kurtosis;
  s.min_abs = std::numeric_limits<double>::infinity();
  std::size_t dead = 0;
  for (double v : w) {
    s.min_abs = std::min(s.min_abs, std::abs(v));
    s.max_abs = std::max(s.max_abs, std::abs(v));
    dead += std::abs(v) < eps_tiny;
  }
  s.dead_fraction = static_cast<double>(dead) / static_cast<double>(w.size());
  const auto ks = stats::ks_test_normal(w, 0.0, c.sigma_w);
  s.ks_statistic = ks.statistic;
  s.ks_p_value = ks.p_value;
  return s;
}

inline Json init_stats_to_json(const InitStatsConfig& c, const InitStats& s) {
  return Json{{"scheme", c.scheme},
              {"depth", c.depth},
              {"sigma_w", c.sigma_w},
              {"n", c.n},
              {"mean", json_number(s.mean)},
              {"variance", json_number(s.variance)},
              {"kurtosis", json_number(s.kurtosis)},
              {"min_abs", json_number(s.min_abs)},
              {"max_abs", json_number(s.max_abs)},
              {"ks_statistic", json_number(s.ks_statistic)},
              {"ks_p_value", json_number(s.ks_p_value)},
              {"dead_fraction", json_number(s.dead_fraction)}};
}

}  // namespace dwf
