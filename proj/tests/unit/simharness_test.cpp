#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "twophase/error.hpp"
#include "twophase/simharness.hpp"

namespace twophase {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidTable;
}

// Small chains keep the BART arms to a few seconds per replicate.
RunConfig tiny(Scenario s, std::vector<Method> methods) {
  Profile p = desk_profile();
  p.replicates = 2;
  p.n_trees = 10;
  p.n_burn = 50;
  p.n_keep = 20;
  p.thin = 1;
  p.imputations = 5;
  RunConfig c = RunConfig::make(s, p);
  c.methods = std::move(methods);
  c.threads = 1;
  c.seed = 11;
  return c;
}

MethodOutcome outcome(double est, double lo, double hi, bool ok = true) {
  MethodOutcome o;
  o.ok = ok;
  o.estimate.estimate = est;
  o.interval.lower = lo;
  o.interval.upper = hi;
  return o;
}

TEST(MetricsRow, ExactEstimates) {
  const std::vector<double> e{1, 2, 3}, lo{0, 1, 2}, hi{2, 3, 4};
  const MetricsRow r = metrics_row(e, lo, hi, e);
  EXPECT_DOUBLE_EQ(r.absolute_bias, 0.0);
  EXPECT_DOUBLE_EQ(r.rmse, 0.0);
  EXPECT_DOUBLE_EQ(r.coverage, 100.0);
  EXPECT_DOUBLE_EQ(r.width, 200.0);
  EXPECT_EQ(r.replicates, 3);
}

TEST(MetricsRow, AlternatingErrorsCancelInBias) {
  const std::vector<double> t{5, 5, 5, 5}, e{6, 4, 6, 4};
  const MetricsRow r = metrics_row(e, t, t, t);
  EXPECT_NEAR(r.absolute_bias, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.rmse, 100.0);
}

TEST(MetricsRow, NeverCovering) {
  const std::vector<double> t{0, 0}, e{1, 1}, lo{0.5, 0.5}, hi{1.5, 1.5};
  const MetricsRow r = metrics_row(e, lo, hi, t);
  EXPECT_DOUBLE_EQ(r.coverage, 0.0);
  EXPECT_DOUBLE_EQ(r.absolute_bias, 100.0);
}

TEST(MetricsRow, RmseBoundsBiasProperty) {
  Rng rng(3);
  std::normal_distribution<double> n(0.3, 1.0);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> e(1 + k % 17), t(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      e[i] = n(rng);
      t[i] = n(rng);
    }
    const MetricsRow r = metrics_row(e, e, e, t);
    EXPECT_GE(r.rmse + 1e-9, r.absolute_bias);
  }
}

TEST(MetricsRow, Errors) {
  const std::vector<double> a{1, 2}, b{1};
  EXPECT_EQ(code_of([&] { metrics_row(a, a, a, b); }), ErrorCode::ColumnMismatch);
  const std::vector<double> none;
  EXPECT_EQ(code_of([&] { metrics_row(none, none, none, none); }),
            ErrorCode::NoSuccessfulReplicates);
}

TEST(ComputeMetrics, OrderIndependentAndCountsFailures) {
  const std::vector<Method> methods{Method::Benchmark, Method::WT_LGM};
  std::vector<ReplicateResult> reps(3);
  for (int i = 0; i < 3; ++i) {
    reps[i].index = i;
    reps[i].truth = i;
    reps[i].outcomes = {outcome(i + 0.1 * i, i - 1, i + 1), outcome(i, i, i, i != 1)};
  }
  const MetricsTable a = compute_metrics(Scenario::S2, methods, reps);
  std::swap(reps[0], reps[2]);
  const MetricsTable b = compute_metrics(Scenario::S2, methods, reps);
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_DOUBLE_EQ(a.rows[0].rmse, b.rows[0].rmse);
  EXPECT_DOUBLE_EQ(a.rows[0].absolute_bias, b.rows[0].absolute_bias);
  EXPECT_NEAR(a.rows[0].absolute_bias, 10.0, 1e-12);
  EXPECT_EQ(a.rows[1].replicates, 2);
  EXPECT_EQ(a.rows[1].failures, 1);
  EXPECT_NEAR(a.rows[1].failure_rate(), 1.0 / 3.0, 1e-12);
  ASSERT_NE(a.find(Scenario::S2, Method::WT_LGM), nullptr);
  EXPECT_EQ(a.find(Scenario::S1, Method::WT_LGM), nullptr);
  EXPECT_EQ(a.records().rows.size(), 2u);
}

TEST(ComputeMetrics, AllFailedRaises) {
  const std::vector<Method> methods{Method::WT_CHAID};
  std::vector<ReplicateResult> reps(2);
  for (auto& r : reps) r.outcomes = {outcome(0, 0, 0, false)};
  EXPECT_EQ(code_of([&] { compute_metrics(Scenario::S1, methods, reps); }),
            ErrorCode::NoSuccessfulReplicates);
}

TEST(Profiles, Presets) {
  const Profile d = desk_profile();
  EXPECT_EQ(d.replicates, 100);
  EXPECT_EQ(d.n_trees, 50);
  EXPECT_EQ(d.n_keep, 200);
  EXPECT_EQ(d.imputations, 10);
  const Profile p = paper_profile();
  EXPECT_EQ(p.replicates, 500);
  EXPECT_EQ(p.n_trees, 100);
  EXPECT_EQ(p.n_keep, 1000);
  EXPECT_TRUE(find_profile("desk"));
  EXPECT_TRUE(find_profile("paper"));
  EXPECT_FALSE(find_profile("laptop"));
  const RunConfig c = RunConfig::make(Scenario::S3, d);
  EXPECT_EQ(c.pipeline.imputation_bart.n_trees, 50);
  EXPECT_EQ(c.pipeline.adjustment.bart.n_keep, 200);
  EXPECT_EQ(c.population.n_continuous, c.scenario.n_continuous);
}

TEST(Validate, RejectsBadConfigs) {
  RunConfig c = tiny(Scenario::S1, {Method::MI_BART});
  c.replicates = 0;
  EXPECT_EQ(code_of([&] { validate(c); }), ErrorCode::InvalidConfig);
  c = tiny(Scenario::S1, {});
  EXPECT_EQ(code_of([&] { validate(c); }), ErrorCode::InvalidConfig);
  c = tiny(Scenario::S1, {Method::MI_BART});
  c.pipeline.imputations = 1;
  EXPECT_EQ(code_of([&] { validate(c); }), ErrorCode::InvalidConfig);
  c = tiny(Scenario::S1, {Method::MI_BART});
  c.pipeline.imputations = 50;
  EXPECT_EQ(code_of([&] { validate(c); }), ErrorCode::InvalidConfig);
  c = tiny(Scenario::S1, {Method::Benchmark});
  c.pipeline.level = 1.0;
  EXPECT_EQ(code_of([&] { validate(c); }), ErrorCode::InvalidConfig);
}

TEST(RunSimulation, BenchmarkOnlyTwoReplicates) {
  const RunConfig c = tiny(Scenario::S1, {Method::Benchmark});
  int calls = 0;
  const SimulationResult r = run_simulation(c, [&](int, int total) {
    ++calls;
    EXPECT_EQ(total, 2);
  });
  ASSERT_EQ(r.metrics.rows.size(), 1u);
  EXPECT_EQ(r.metrics.rows[0].replicates, 2);
  EXPECT_EQ(r.metrics.rows[0].method, Method::Benchmark);
  EXPECT_EQ(r.replicates.size(), 2u);
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(replicate_records(r.replicates).rows.size(), 2u);
}

TEST(RunReplicate, DeterministicAndArmIndependent) {
  const RunConfig alone = tiny(Scenario::S1, {Method::Benchmark, Method::WT_LGM});
  const RunConfig more =
      tiny(Scenario::S1, {Method::WT_BART, Method::WT_LGM, Method::Benchmark});
  const ReplicateResult a = run_replicate(alone, 4);
  const ReplicateResult b = run_replicate(alone, 4);
  const ReplicateResult c = run_replicate(more, 4);
  EXPECT_EQ(a.truth, b.truth);
  EXPECT_EQ(a.truth, c.truth);
  ASSERT_TRUE(a.outcomes[0].ok);
  ASSERT_TRUE(a.outcomes[1].ok);
  EXPECT_EQ(a.outcomes[0].estimate.estimate, b.outcomes[0].estimate.estimate);
  EXPECT_EQ(a.outcomes[0].estimate.estimate, c.outcomes[2].estimate.estimate);
  EXPECT_EQ(a.outcomes[1].estimate.estimate, c.outcomes[1].estimate.estimate);
  EXPECT_EQ(a.outcomes[1].interval.upper, c.outcomes[1].interval.upper);
  EXPECT_NE(a.truth, run_replicate(alone, 5).truth);
}

TEST(RunReplicate, EstimatesNearTruth) {
  const RunConfig c = tiny(Scenario::S1, {Method::Benchmark, Method::WT_LGM, Method::MI_BART});
  const ReplicateResult r = run_replicate(c, 0);
  for (const auto& o : r.outcomes) {
    ASSERT_TRUE(o.ok) << o.error;
    EXPECT_LT(std::abs(o.estimate.estimate - r.truth), 0.5) << method_name(o.method);
    EXPECT_LE(o.interval.lower, o.estimate.estimate);
    EXPECT_GE(o.interval.upper, o.estimate.estimate);
  }
  ASSERT_TRUE(r.outcomes[2].mi.has_value());
  EXPECT_EQ(outcome_records(r.outcomes[2]).rows.size(), 1u);
}

}  // namespace
}  // namespace twophase
