#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dwf/experiments.hpp"

using namespace dwf;

namespace {

Json blob_config() {
  return Json{{"version", 1},
              {"seed", 7},
              {"model", {{"layer_sizes", {4, 6, 3}}}},
              {"data", {{"source", "blobs"}, {"n_train", 90}, {"n_test", 60}, {"features", 4}, {"classes", 3}}},
              {"train", {{"epochs", 4}, {"batch_size", 30}, {"lr", 0.1}}},
              {"sweep", {{"count", 3}, {"lambda_min", 1e-4}, {"lambda_max", 1e-1}, {"depths", {2}},
                         {"methods", {"dwf", "vanilla_l1"}}}}};
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Data;
}

}  // namespace

TEST(LogGrid, EndpointsAndRatios) {
  const auto g = log_grid(1e-6, 1e-1, 12);
  ASSERT_EQ(g.size(), 12u);
  EXPECT_EQ(g.front(), 1e-6);
  EXPECT_EQ(g.back(), 1e-1);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], std::pow(1e5, 1.0 / 11.0), 1e-12);
  const auto cr = default_cr_list();
  EXPECT_EQ(cr.size(), 15u);
  EXPECT_NEAR(cr[7], 1e3, 1e-9);
  EXPECT_THROW(log_grid(1.0, 0.5, 3), Error);
}

TEST(ExperimentConfig, ProfilesAndDefaults) {
  const Json minimal{{"version", 1}};
  EXPECT_EQ(config_from_json(minimal, Profile::Ci).train.epochs, 30u);
  EXPECT_EQ(config_from_json(minimal, Profile::Paper).train.epochs, 75u);
  // An explicit value beats the profile.
  EXPECT_EQ(config_from_json(Json{{"version", 1}, {"train", {{"epochs", 3}}}}, Profile::Paper).train.epochs, 3u);
  const auto c = config_from_json(minimal);
  EXPECT_EQ(c.model, MlpSpec::lenet_300_100());
  EXPECT_EQ(c.sweep.count, 12u);
  EXPECT_EQ(c.prune.cr_list.size(), 15u);
  EXPECT_EQ(scheme_name(c.train.init), scheme_name(DwfTruncatedInit{}));
}

TEST(ExperimentConfig, ResolvedJsonReparsesToSameHash) {
  const auto c = config_from_json(blob_config());
  const auto again = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(again), config_to_json(c));
  EXPECT_EQ(config_hash(again, "sweep"), config_hash(c, "sweep"));
  EXPECT_NE(config_hash(c, "sweep"), config_hash(c, "train"));
  auto moved = c;
  moved.data.dir = "/elsewhere";
  EXPECT_EQ(config_hash(moved, "sweep"), config_hash(c, "sweep"));
  auto other = c;
  other.train.lambda = 1e-3;
  EXPECT_NE(config_hash(other, "sweep"), config_hash(c, "sweep"));
}

TEST(ExperimentConfig, RejectsUnknownFieldsAndBadValues) {
  for (const char* section : {"", "train", "sweep", "data", "prune", "lasso", "init_stats", "model"}) {
    Json j = blob_config();
    if (*section) {
      if (!j.contains(section)) j[section] = Json::object();
      j[section]["bogus"] = 1;
    } else {
      j["bogus"] = 1;
    }
    EXPECT_EQ(kind_of([&] { config_from_json(j); }), ErrorKind::Config) << section;
  }
  EXPECT_EQ(kind_of([] { config_from_json(Json{{"version", 2}}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(Json::object()); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(Json{{"version", 1}, {"train", {{"depth", "three"}}}}); }),
            ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(Json{{"version", 1}, {"train", {{"init", "xavier"}}}}); }),
            ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(Json{{"version", 1}, {"sweep", {{"depths", {1}}}}}); }),
            ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(Json{{"version", 1}, {"prune", {{"methods", {"lottery"}}}}}); }),
            ErrorKind::Config);
  EXPECT_EQ(kind_of([] { profile_from_string("full"); }), ErrorKind::Config);
}

TEST(ExperimentData, MnistWithoutDirectoryIsDataError) {
  const auto c = config_from_json(Json{{"version", 1}});
  EXPECT_EQ(kind_of([&] { load_experiment_data(c); }), ErrorKind::Data);
}

TEST(Sweep, RowsAreDeterministicAndPerRowSeeded) {
  const auto c = config_from_json(blob_config());
  const auto data = load_experiment_data(c);
  const auto rows = run_sweep(c, data);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].seed, derive_seed(7, {2, 0}));
  EXPECT_EQ(rows[4].method, "vanilla_l1");
  EXPECT_EQ(rows[4].depth, 1u);
  EXPECT_EQ(rows[4].seed, derive_seed(7, {1, 1}));
  bool any_pareto = false;
  for (const auto& r : rows) {
    EXPECT_EQ(r.status, "ok") << r.error;
    EXPECT_GE(r.cr, 1.0);
    any_pareto = any_pareto || r.pareto;
  }
  EXPECT_TRUE(any_pareto);
  EXPECT_EQ(sweep_to_csv(run_sweep(c, data)), sweep_to_csv(rows));
}

TEST(Sweep, ParetoFlags) {
  std::vector<SweepRow> rows(4);
  rows[0].test_acc = 0.9, rows[0].cr = 10;
  rows[1].test_acc = 0.8, rows[1].cr = 100;
  rows[2].test_acc = 0.8, rows[2].cr = 10;   // dominated by both
  rows[3].test_acc = 0.99, rows[3].cr = 1000;
  rows[3].status = "diverged";
  mark_pareto(rows);
  EXPECT_TRUE(rows[0].pareto);
  EXPECT_TRUE(rows[1].pareto);
  EXPECT_FALSE(rows[2].pareto);
  EXPECT_FALSE(rows[3].pareto);
}

TEST(Prune, BlobCurvesCoverEveryMethod) {
  Json j = blob_config();
  j["prune"] = {{"cr_list", {2.0, 5.0}}, {"finetune_epochs", 2}, {"synflow_iterations", 5}, {"snip_batch", 30}};
  const auto c = config_from_json(j);
  const auto res = run_prune(c, load_experiment_data(c));
  ASSERT_EQ(res.rows.size(), 10u);
  for (const auto& r : res.rows) {
    EXPECT_EQ(r.status, "ok") << r.method << " " << r.error;
    // Retrained or not, entries outside the mask stay zero.
    EXPECT_GE(r.achieved_cr, 51.0 / static_cast<double>(r.kept)) << r.method;
    EXPECT_EQ(r.kept, kept_count(c.model.parameter_count(), CompressionTarget{r.target_cr}));
  }
  EXPECT_EQ(res.traces.size(), 8u);  // posthoc does not retrain
  EXPECT_FALSE(res.dense_traces.empty());
}

TEST(LassoVerify, SmallRunMeetsTolerances) {
  LassoVerifyConfig lc;
  lc.seeds = 3;
  const auto rows = run_lasso_verify(lc, 1);
  ASSERT_EQ(rows.size(), 9u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.gap, 1e-4);
    EXPECT_LE(r.misalignment, 1e-6);
  }
  EXPECT_EQ(lasso_verify_to_csv(run_lasso_verify(lc, 1)), lasso_verify_to_csv(rows));
}

TEST(InitStats, VarMatchHitsTargetVariance) {
  InitStatsConfig ic;
  ic.n = 20000;
  const auto s = run_init_stats(ic, 3);
  EXPECT_NEAR(s.variance, 0.01, 0.001);
  EXPECT_GT(s.kurtosis, 3.0);
  EXPECT_GE(s.max_abs, s.min_abs);
  ic.n = 10;
  EXPECT_THROW(run_init_stats(ic, 3), Error);
}

TEST(LassoVerify, ZeroLambdaRowHasNoGap) {
  LassoVerifyConfig lc;
  lc.seeds = 2;
  lc.lambda_fractions = {0.0};
  for (const auto& r : run_lasso_verify(lc, 4)) {
    EXPECT_EQ(r.lambda, 0.0);
    EXPECT_LE(r.gap, 1e-6);
  }
}
