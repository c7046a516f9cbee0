#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "twophase/error.hpp"
#include "twophase/propensity.hpp"
#include "twophase/sampling.hpp"

namespace twophase {
namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidTable;
}

using Reals = std::vector<double>;

double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(FitLogistic, InterceptOnlyBalanced) {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(100, 1);
  std::vector<int> r(100);
  for (int i = 0; i < 100; ++i) r[i] = i % 2;
  EXPECT_NEAR(fit_logistic(X, r).coefficients(0), 0.0, 1e-6);
}

TEST(FitLogistic, ConsistentOnSimulatedData) {
  oracle::Rng rng(1);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  const int n = 5000;
  Eigen::MatrixXd X(n, 2);
  std::vector<int> r(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = z(rng);
    r[i] = u(rng) < inv_logit(1.0 + 2.0 * X(i, 1));
  }
  const LogisticFit fit = fit_logistic(X, r);
  EXPECT_NEAR(fit.coefficients(0), 1.0, 0.15);
  EXPECT_NEAR(fit.coefficients(1), 2.0, 0.15);
  // Score equations at convergence, recomputed independently.
  Eigen::VectorXd resid(n);
  for (int i = 0; i < n; ++i) resid(i) = r[i] - inv_logit(X.row(i).dot(fit.coefficients));
  EXPECT_LT((X.transpose() * resid).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(fit.max_score, 1e-6);
}

TEST(FitLogistic, Failures) {
  Eigen::MatrixXd X(6, 2);
  X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  EXPECT_EQ(code_of([&] { fit_logistic(X, std::vector<int>{0, 0, 0, 1, 1, 1}); }),
            ErrorCode::Separation);
  EXPECT_EQ(code_of([&] { fit_logistic(X, std::vector<int>(6, 1)); }), ErrorCode::Separation);
  Eigen::MatrixXd dup(6, 3);
  dup << X, X.col(1) * 2.0;
  EXPECT_EQ(code_of([&] { fit_logistic(dup, std::vector<int>{0, 1, 0, 1, 0, 1}); }),
            ErrorCode::SingularDesign);
}

TEST(DesignMatrix, DummyCodesCategoricals) {
  const Table t({Column{"g", ColumnKind::categorical, {0, 1, 2, 1}, {"a", "b", "c"}},
                 Column{"x", ColumnKind::continuous, {0.5, 1.5, 2.5, 3.5}, {}}});
  const Eigen::MatrixXd M = design_matrix(t);
  ASSERT_EQ(M.cols(), 4);
  EXPECT_EQ(M(0, 1) + M(0, 2), 0.0);
  EXPECT_EQ(M(1, 1), 1.0);
  EXPECT_EQ(M(2, 2), 1.0);
  EXPECT_EQ(M(3, 3), 3.5);
}

struct Highdim {
  Eigen::MatrixXd X;  // x1..x10, z1..z10, no intercept
  std::vector<int> r;
};

// S2-style data: signal in x1, x2, z1, z2, z3; the rest is noise.
Highdim s2_data(std::size_t n, oracle::Rng& rng) {
  std::normal_distribution<double> z;
  std::bernoulli_distribution b(0.5);
  std::uniform_real_distribution<double> u;
  Highdim d{Eigen::MatrixXd(static_cast<Eigen::Index>(n), 20), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (int j = 0; j < 10; ++j) d.X(row, j) = z(rng);
    for (int j = 10; j < 20; ++j) d.X(row, j) = b(rng);
    UnitCovariates c{d.X(row, 0), d.X(row, 1), d.X(row, 2), d.X(row, 10), d.X(row, 11),
                     d.X(row, 12)};
    d.r[i] = u(rng) < scenario_propensity(Scenario::S2, c);
  }
  return d;
}

TEST(Lasso, LambdaMaxZeroesEverything) {
  oracle::Rng rng(2);
  const Highdim d = s2_data(400, rng);
  const double lmax = lasso_lambda_max(d.X, d.r);
  const Reals grid{lmax, lmax * 1.5};
  const LassoPath path = lasso_logistic_path(d.X, d.r, grid);
  for (const auto& beta : path.coefficients) EXPECT_EQ(beta.cwiseAbs().maxCoeff(), 0.0);
  const Reals below{lmax * 0.9};
  EXPECT_GT(lasso_logistic_path(d.X, d.r, below).coefficients[0].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Lasso, DefaultGridShape) {
  oracle::Rng rng(3);
  const Highdim d = s2_data(300, rng);
  const LassoPath path = lasso_logistic_path(d.X, d.r);
  ASSERT_EQ(path.lambdas.size(), 50u);
  EXPECT_TRUE(std::is_sorted(path.lambdas.rbegin(), path.lambdas.rend()));
  EXPECT_NEAR(path.lambdas.back() / path.lambdas.front(), 1e-3, 1e-9);
}

TEST(Lasso, SelectsTrueSignalInS2) {
  int hits = 0;
  for (int s = 0; s < 50; ++s) {
    oracle::Rng rng(1000 + s);
    const Highdim d = s2_data(1500, rng);
    Rng cv(s);
    const LassoSelection sel = lasso_logistic_select(d.X, d.r, 10, cv);
    const bool x1 = std::count(sel.columns.begin(), sel.columns.end(), 0u) > 0;
    const bool z1 = std::count(sel.columns.begin(), sel.columns.end(), 10u) > 0;
    hits += x1 && z1;
    EXPECT_LE(sel.cv_deviance, sel.cv_deviance_at_max);
  }
  EXPECT_GE(hits, 45);
}

TEST(Lasso, DuplicatedColumnAtStrongPenalty) {
  oracle::Rng rng(4);
  const Highdim base = s2_data(800, rng);
  Eigen::MatrixXd X(base.X.rows(), 3);
  X << base.X.col(0), base.X.col(0), base.X.col(5);
  const double lmax = lasso_lambda_max(X, base.r);
  const Reals grid{0.5 * lmax, 0.2 * lmax};
  const LassoPath path = lasso_logistic_path(X, base.r, grid);
  for (const auto& beta : path.coefficients) {
    EXPECT_FALSE(beta(0) != 0.0 && beta(1) != 0.0);
    EXPECT_TRUE(beta(0) != 0.0 || beta(1) != 0.0);
  }
}

TEST(Lasso, ScreenKeepsCategoricalByAnyDummy) {
  oracle::Rng rng(5);
  std::uniform_real_distribution<double> u;
  const std::size_t n = 1200;
  Reals g(n), noise(n);
  std::vector<int> r(n);
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = static_cast<double>(i % 3);
    noise[i] = z(rng);
    r[i] = u(rng) < (g[i] == 2 ? 0.9 : 0.3);
  }
  const Table X({Column{"g", ColumnKind::categorical, g, {"a", "b", "c"}},
                 Column{"n", ColumnKind::continuous, noise, {}}});
  Rng cv(6);
  const auto kept = lasso_screen(X, r, 10, cv);
  EXPECT_NE(std::find(kept.begin(), kept.end(), "g"), kept.end());
}

Table binary_predictor(std::size_t per_level) {
  Reals v;
  for (std::size_t i = 0; i < 2 * per_level; ++i) v.push_back(i < per_level ? 0.0 : 1.0);
  return Table({Column{"z", ColumnKind::categorical, v, {"0", "1"}}});
}

TEST(Chaid, StrongBinaryPredictorSplits) {
  const std::size_t m = 500;
  std::vector<int> r(2 * m);
  for (std::size_t i = 0; i < m; ++i) r[i] = i % 10 != 0;         // rate 0.9
  for (std::size_t i = m; i < 2 * m; ++i) r[i] = i % 10 == 0;     // rate 0.1
  // Oracle: the 2x2 chi-square p-value is essentially zero.
  const double a = 450, b = 50, c = 50, d = 450, N = 1000;
  const double stat = N * (a * d - b * c) * (a * d - b * c) / std::pow(500.0, 4);
  ASSERT_LT(oracle::chisq_sf(stat, 1), 1e-100);
  const CellPartition p = chaid_cells(binary_predictor(m), r);
  ASSERT_EQ(p.cell_count(), 2u);
  EXPECT_NEAR(p.response_rate(static_cast<std::size_t>(p.cell_of[0])), 0.9, 1e-12);
  EXPECT_NEAR(p.response_rate(static_cast<std::size_t>(p.cell_of[m])), 0.1, 1e-12);
}

TEST(Chaid, IndependentPredictorGivesOneCell) {
  const std::size_t m = 500;
  std::vector<int> r(2 * m);
  for (std::size_t i = 0; i < 2 * m; ++i) r[i] = i % 2;
  EXPECT_EQ(chaid_cells(binary_predictor(m), r).cell_count(), 1u);
}

TEST(Chaid, BelowMinNodeNeverSplits) {
  const std::size_t m = 20;
  std::vector<int> r(2 * m);
  for (std::size_t i = 0; i < 2 * m; ++i) r[i] = i < m;
  ChaidOptions o;
  o.min_node = 50;
  o.min_child = 1;
  EXPECT_EQ(chaid_cells(binary_predictor(m), r, o).cell_count(), 1u);
}

TEST(Chaid, MergesLevelsWithEqualRates) {
  // Four levels with rates 0.8, 0.8, 0.2, 0.2 collapse to two cells.
  const std::size_t per = 200;
  Reals g;
  std::vector<int> r;
  for (int level = 0; level < 4; ++level) {
    for (std::size_t i = 0; i < per; ++i) {
      g.push_back(level);
      r.push_back(level < 2 ? (i % 5 != 0) : (i % 5 == 0));
    }
  }
  const Table X({Column{"g", ColumnKind::categorical, g, {"a", "b", "c", "d"}}});
  const CellPartition p = chaid_cells(X, r);
  ASSERT_EQ(p.cell_count(), 2u);
  EXPECT_EQ(p.cell_of[0], p.cell_of[per]);
  EXPECT_EQ(p.cell_of[2 * per], p.cell_of[3 * per]);
  EXPECT_NE(p.cell_of[0], p.cell_of[2 * per]);
}

TEST(Chaid, PartitionInvariantsAndDeterminism) {
  oracle::Rng rng(7);
  std::uniform_int_distribution<int> lv(0, 3);
  std::uniform_real_distribution<double> u;
  const std::size_t n = 2000;
  Reals a(n), b(n);
  std::vector<int> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = lv(rng);
    b[i] = lv(rng);
    r[i] = u(rng) < 0.2 + 0.15 * a[i] + (b[i] == 3 ? 0.1 : 0.0);
  }
  const Table X({Column{"a", ColumnKind::categorical, a, {"0", "1", "2", "3"}},
                 Column{"b", ColumnKind::categorical, b, {"0", "1", "2", "3"}}});
  const CellPartition p = chaid_cells(X, r);
  EXPECT_EQ(chaid_cells(X, r).cell_of, p.cell_of);
  std::vector<int> size(p.cell_count(), 0), resp(p.cell_count(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++size[static_cast<std::size_t>(p.cell_of[i])];
    resp[static_cast<std::size_t>(p.cell_of[i])] += r[i];
  }
  EXPECT_EQ(size, p.sizes);
  EXPECT_EQ(resp, p.respondents);
  for (int k : p.respondents) EXPECT_GE(k, 1);
  // Sum of 1/pi_m over a cell's respondents recovers the cell size.
  for (std::size_t m = 0; m < p.cell_count(); ++m) {
    EXPECT_NEAR(p.respondents[m] / p.response_rate(m), p.sizes[m], 1e-9);
  }
}

TEST(Chaid, BonferroniMultiplier) {
  EXPECT_EQ(bonferroni_multiplier(4, 4), 1.0);
  // Free categories: Stirling numbers of the second kind, S(4, 2) = 7.
  EXPECT_EQ(bonferroni_multiplier(4, 2), 7.0);
  EXPECT_EQ(bonferroni_multiplier(5, 3), 25.0);
}

TEST(Discretize, QuintilesOfContinuous) {
  Reals v(100);
  std::iota(v.begin(), v.end(), 1.0);
  const Reals br = quintile_breaks(v);
  ASSERT_EQ(br.size(), 4u);
  const Table X({Column{"x", ColumnKind::continuous, v, {}}});
  const Table D = discretize(X);
  EXPECT_EQ(D.column("x").kind, ColumnKind::categorical);
  std::map<double, int> counts;
  for (double c : D.column("x").values) ++counts[c];
  EXPECT_EQ(counts.size(), 5u);
  for (const auto& [level, count] : counts) EXPECT_EQ(count, 20);
}

PropensityFrame frame_of(Table covariates) {
  PropensityFrame f;
  const std::size_t n = covariates.rows();
  f.covariates = std::move(covariates);
  for (std::size_t i = 0; i < n; ++i) {
    f.phase1_weight.push_back(1.0 + static_cast<double>(i % 3));
    f.stratum.push_back(1 + static_cast<std::int64_t>(i % 2));
    f.cluster.push_back(1 + static_cast<std::int64_t>(i % 6));
  }
  return f;
}

Table two_covariates(std::size_t n, oracle::Rng& rng) {
  std::normal_distribution<double> z;
  std::bernoulli_distribution b;
  Reals x(n), zz(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = z(rng);
    zz[i] = b(rng);
  }
  return Table({Column{"x1", ColumnKind::continuous, x, {}},
                Column{"z1", ColumnKind::binary, zz, {}}});
}

AdjustmentOptions quick_options() {
  AdjustmentOptions o;
  o.bart.n_trees = 20;
  o.bart.n_burn = 100;
  o.bart.n_keep = 50;
  o.bart.thin = 1;
  return o;
}

TEST(NonresponseAdjustment, FullResponseGivesUnitAdjustments) {
  oracle::Rng rng(8);
  const PropensityFrame f = frame_of(two_covariates(120, rng));
  const std::vector<int> r(120, 1);
  for (auto m : {AdjustmentMethod::LGM, AdjustmentMethod::CHAID, AdjustmentMethod::BART,
                 AdjustmentMethod::rBART}) {
    Rng fit(9);
    const AdjustmentResult res = nonresponse_adjustment(m, f, r, quick_options(), fit);
    ASSERT_EQ(res.adjustment.size(), 120u);
    for (double a : res.adjustment) EXPECT_EQ(a, 1.0) << adjustment_method_name(m);
  }
}

TEST(NonresponseAdjustment, CellWithHalfResponding) {
  // Eight units in one cell, four respond.
  const Table X({Column{"z1", ColumnKind::binary, Reals(8, 1.0), {}}});
  const PropensityFrame f = frame_of(X);
  const std::vector<int> r{1, 0, 1, 0, 1, 0, 1, 0};
  Rng fit(10);
  const AdjustmentResult res =
      nonresponse_adjustment(AdjustmentMethod::CHAID, f, r, quick_options(), fit);
  ASSERT_EQ(res.adjustment.size(), 4u);
  for (double a : res.adjustment) EXPECT_DOUBLE_EQ(a, 2.0);
}

TEST(NonresponseAdjustment, ClippingCapsAtOneHundred) {
  EXPECT_DOUBLE_EQ(clipped_adjustment(0.001, 0.01), 100.0);
  EXPECT_DOUBLE_EQ(clipped_adjustment(0.5, 0.01), 2.0);
  EXPECT_DOUBLE_EQ(clipped_adjustment(1.2, 0.01), 1.0);
}

TEST(NonresponseAdjustment, EveryMethodGivesValidAdjustments) {
  oracle::Rng rng(11);
  const std::size_t n = 400;
  const Table X = two_covariates(n, rng);
  std::uniform_real_distribution<double> u;
  std::vector<int> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = u(rng) < inv_logit(0.5 + X.at(i, 0) - X.at(i, 1));
  }
  const PropensityFrame f = frame_of(X);
  for (auto m : {AdjustmentMethod::LGM, AdjustmentMethod::CHAID, AdjustmentMethod::BART,
                 AdjustmentMethod::rBART}) {
    Rng fit(12);
    const AdjustmentResult res = nonresponse_adjustment(m, f, r, quick_options(), fit);
    EXPECT_EQ(res.propensity.size(), n);
    EXPECT_EQ(res.adjustment.size(),
              static_cast<std::size_t>(std::count(r.begin(), r.end(), 1)));
    for (double a : res.adjustment) {
      EXPECT_GE(a, 1.0);
      EXPECT_LE(a, 100.0);
    }
    // The fitted model scores new units the same way as training units.
    const auto again = res.adjustments_for(f, 0.01);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (r[i]) EXPECT_NEAR(again[i], res.adjustment[k++], 1e-12);
    }
    const Records rec = adjustment_records(res, r);
    EXPECT_EQ(rec.rows.size(), n);
  }
}

TEST(NonresponseAdjustment, Errors) {
  oracle::Rng rng(13);
  const PropensityFrame f = frame_of(two_covariates(20, rng));
  Rng fit(14);
  EXPECT_EQ(code_of([&] {
              nonresponse_adjustment(AdjustmentMethod::LGM, f, std::vector<int>(20, 0),
                                     quick_options(), fit);
            }),
            ErrorCode::SingleClass);
  EXPECT_EQ(code_of([&] {
              nonresponse_adjustment(AdjustmentMethod::LGM, f, std::vector<int>(19, 1),
                                     quick_options(), fit);
            }),
            ErrorCode::ColumnMismatch);
}

TEST(SubsampleWeights, Examples) {
  EXPECT_EQ(subsample_weights(Reals{10}, 0.5, Reals{2})[0], 40.0);
  const Reals w{3.5, 1.25, 8};
  EXPECT_EQ(subsample_weights(w, 1.0, Reals(3, 1.0)), w);
  const Reals a{1.5, 2.0, 1.1};
  const Reals base = subsample_weights(w, 0.5, a);
  Reals w7 = w;
  for (double& v : w7) v *= 7;
  const Reals scaled = subsample_weights(w7, 0.5, a);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(scaled[i], 7 * base[i], 1e-12);
  EXPECT_EQ(code_of([] { subsample_weights(Reals{1}, 0.5, Reals{0}); }),
            ErrorCode::NonPositiveInput);
  EXPECT_EQ(code_of([] { subsample_weights(Reals{-1}, 0.5, Reals{1}); }),
            ErrorCode::NonPositiveInput);
  EXPECT_EQ(code_of([] { subsample_weights(Reals{1}, 0.0, Reals{1}); }),
            ErrorCode::NonPositiveInput);
}

}  // namespace
}  // namespace twophase
