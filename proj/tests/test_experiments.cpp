// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "btrnn/experiments.hpp"

using namespace btrnn;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::uint64_t find_count(const ParamsTable& t, std::size_t d, std::size_t R, std::size_t N) {
  for (const auto& r : t.rows)
    if (r.kind == "btd" && r.d == d && r.R == R && r.N == N) return r.param_count;
  ADD_FAILURE() << "row d=" << d << " R=" << R << " N=" << N << " missing";
  return 0;
}

}  // namespace

TEST(Params, DefaultTable) {
  const auto t = run_params(ParamsConfig{});
  EXPECT_EQ(find_count(t, 2, 1, 1), 129u);
  EXPECT_EQ(find_count(t, 2, 4, 1), 528u);
  EXPECT_EQ(find_count(t, 2, 1, 2), 258u);
  EXPECT_EQ(find_count(t, 4, 4, 1), 416u);
  EXPECT_EQ(t.rows.back().kind, "dense");
  EXPECT_EQ(t.rows.back().param_count, 4096u);
  const auto csv = t.to_csv();
  EXPECT_EQ(csv.header.front(), "kind");
  EXPECT_EQ(csv.rows.size(), t.rows.size());
}

TEST(Params, RankNoticeForSmallModes) {
  const auto t = run_params(ParamsConfig{});
  const bool flagged = std::any_of(t.notices.begin(), t.notices.end(),
                                   [](const std::string& n) { return n.find("d=4 R=4") != std::string::npos; });
  EXPECT_TRUE(flagged);
}

TEST(Sweep, DenseRowAndCurves) {
  const auto t = run_sweep(SweepConfig{});
  EXPECT_EQ(t.rows.back().kind, "dense");
  EXPECT_EQ(t.rows.back().param_count, 1048576u);
  const auto r1 = sweep_curve(t, 1);
  ASSERT_GE(r1.size(), 4u);
  for (std::size_t k = 1; k < r1.size(); ++k) EXPECT_LE(r1[k], r1[k - 1]);
  for (std::size_t R : {2, 3, 4}) EXPECT_TRUE(is_u_shaped(sweep_curve(t, R))) << "R=" << R;
}

TEST(Sweep, UShapeHelper) {
  EXPECT_TRUE(is_u_shaped({9, 4, 2, 3, 8}));
  EXPECT_FALSE(is_u_shaped({9, 4, 2, 1}));
  EXPECT_FALSE(is_u_shaped({1, 2, 3}));
  EXPECT_FALSE(is_u_shaped({5, 3, 4, 2, 6}));
}

TEST(Sweep, InfeasibleSplitsAreSkipped) {
  SweepConfig cfg;
  cfg.d_values = {1, 2, 13};
  const auto t = run_sweep(cfg);
  for (const auto& r : t.rows) EXPECT_NE(r.d, 13u);
  EXPECT_FALSE(t.notices.empty());
}

TEST(Bench, MeasuredEqualsAnalytic) {
  BenchConfig cfg;
  cfg.timing = false;
  const auto report = run_benchmark(cfg);
  ASSERT_FALSE(report.rows.empty());
  for (const auto& r : report.rows) {
    EXPECT_EQ(r.flops_measured, r.flops_reordered) << r.config;
    EXPECT_EQ(r.wall_ns_mean, 0.0);
  }
}

TEST(Bench, DoublingTermsDoublesCounts) {
  BenchConfig cfg;
  cfg.timing = false;
  const auto report = run_benchmark(cfg);
  for (const auto& a : report.rows) {
    if (a.N != 1) continue;
    for (const auto& b : report.rows)
      if (b.N == 2 && b.R == a.R && b.shape == a.shape) {
        EXPECT_EQ(b.flops_reordered, 2 * a.flops_reordered);
        EXPECT_EQ(b.flops_naive, 2 * a.flops_naive);
      }
  }
}

TEST(Recovery, ReportedParamCounts) {
  RecoveryConfig cfg;
  cfg.training.epochs = 1;
  EXPECT_EQ(run_recovery(cfg).param_count, 129u);
  cfg.R = 4;
  EXPECT_EQ(run_recovery(cfg).param_count, 528u);
  cfg.R = 1;
  cfg.N = 2;
  EXPECT_EQ(run_recovery(cfg).param_count, 258u);
}

TEST(Recovery, InfeasibleSplitIsConfigError) {
  RecoveryConfig cfg;
  cfg.dim = 7;
  EXPECT_THROW(cfg.shape(), ConfigError);
}

TEST(Recovery, RankAndTermTrendsOverSeeds) {
  std::vector<double> r1, r2, r4, n2;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RecoveryConfig cfg;
    cfg.seed = seed;
    r1.push_back(run_recovery(cfg).final_mse);
    cfg.R = 2;
    r2.push_back(run_recovery(cfg).final_mse);
    cfg.R = 4;
    r4.push_back(run_recovery(cfg).final_mse);
    cfg.R = 1;
    cfg.N = 2;
    n2.push_back(run_recovery(cfg).final_mse);
  }
  EXPECT_GE(median(r1), median(r2));
  EXPECT_GE(median(r2), median(r4));
  EXPECT_LT(median(r4), median(r1));
  EXPECT_LE(median(n2), median(r1));
}

TEST(Recovery, NoiseFreeIdentity) {
  RecoveryConfig cfg;
  cfg.target = RecoveryTarget::identity;
  cfg.noise_std = 0.0;
  cfg.R = 4;
  const auto report = run_recovery(cfg);
  EXPECT_LT(report.rel_frobenius, 0.05);
  EXPECT_EQ(report.learned.shape(), (Shape{64, 64}));
}

TEST(Recovery, IdenticalRunsAreBitwiseIdentical) {
  RecoveryConfig cfg;
  cfg.training.epochs = 5;
  cfg.seed = 3;
  const auto a = run_recovery(cfg);
  const auto b = run_recovery(cfg);
  EXPECT_EQ(a.summary_csv(cfg).to_string(), b.summary_csv(cfg).to_string());
  EXPECT_EQ(metrics_csv(a.history).to_string(), metrics_csv(b.history).to_string());
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  cfg.seed = 4;
  EXPECT_NE(run_recovery(cfg).checkpoint, a.checkpoint);
}

TEST(SequenceTask, MajorityBaselineIsChance) {
  const SequenceTaskConfig cfg;
  const auto [train, test] = make_template_task<double>(cfg);
  EXPECT_EQ(train.size(), cfg.train_size);
  EXPECT_EQ(test.size(), cfg.test_size);
  EXPECT_DOUBLE_EQ(majority_baseline(train, test), 0.25);
  for (const auto& s : train) EXPECT_EQ(s.inputs.size(), cfg.seq_len);
}

TEST(SequenceTask, ModelSpecShapes) {
  ModelSpec spec;
  EXPECT_EQ(spec.shape().input_dims(), (std::vector<std::size_t>{8, 8, 8}));
  EXPECT_EQ(spec.shape().output_dims(), (std::vector<std::size_t>{4, 4, 4}));
  EXPECT_EQ(dense_input_map_params(spec), 512u * 64u);
  spec.cell = CellKind::bt_gru;
  EXPECT_EQ(spec.shape().output_size(), 48u);
  EXPECT_EQ(parse_cell_kind("dense-lstm"), CellKind::dense_lstm);
  EXPECT_THROW(parse_cell_kind("lstm2"), ConfigError);
}

TEST(SequenceTask, ShortRunIsReproducible) {
  SequenceTaskConfig cfg;
  cfg.training.epochs = 2;
  cfg.train_size = 64;
  cfg.test_size = 32;
  const auto a = run_sequence_task(cfg);
  const auto b = run_sequence_task(cfg);
  EXPECT_EQ(a.summary_csv(cfg).to_string(), b.summary_csv(cfg).to_string());
  EXPECT_EQ(metrics_csv(a.history).to_string(), metrics_csv(b.history).to_string());
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  EXPECT_LT(static_cast<double>(a.input_map_params), 0.05 * static_cast<double>(a.dense_input_map_params));
}

TEST(GradCheckDriver, DefaultsPassForEveryModel) {
  for (const char* m : {"bt-lstm", "bt-gru", "dense-lstm", "dense-gru", "bt-linear"}) {
    GradCheckConfig cfg;
    cfg.model = m;
    const auto r = run_gradcheck(cfg);
    EXPECT_TRUE(r.passed) << m << " " << r.result.max_rel_error;
    EXPECT_GT(r.result.coordinates, 0u);
  }
}

TEST(GradCheckDriver, UnknownModelRejected) {
  GradCheckConfig cfg;
  cfg.model = "transformer";
  EXPECT_THROW(cfg.validate(), ConfigError);
}
