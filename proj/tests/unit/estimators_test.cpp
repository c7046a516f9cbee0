#include <cmath>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "twophase/error.hpp"
#include "twophase/estimators.hpp"

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

using Ids = std::vector<std::int64_t>;
using Reals = std::vector<double>;

TEST(WeightedMean, EqualWeights) {
  EXPECT_DOUBLE_EQ(weighted_mean(Reals{1, 2, 3}, Reals{1, 1, 1}), 2.0);
}

TEST(WeightedMean, HandValue) {
  EXPECT_DOUBLE_EQ(weighted_mean(Reals{0, 3}, Reals{1, 2}), 2.0);
}

TEST(WeightedMean, InvariantToWeightScale) {
  oracle::Rng rng(3);
  std::uniform_real_distribution<double> u(0.5, 4.0);
  Reals y(40), w(40);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = u(rng);
    w[i] = u(rng);
  }
  const double base = weighted_mean(y, w);
  for (double c : {1e-3, 0.7, 13.0, 1e6}) {
    Reals wc = w;
    for (double& v : wc) v *= c;
    EXPECT_NEAR(weighted_mean(y, wc), base, 1e-12);
  }
  EXPECT_NEAR(base, oracle::hajek(y, w), 1e-12);
}

TEST(WeightedMean, Errors) {
  EXPECT_EQ(code_of([] { weighted_mean(Reals{}, Reals{}); }), ErrorCode::EmptyInput);
  EXPECT_EQ(code_of([] { weighted_mean(Reals{1, 2}, Reals{1, 0}); }),
            ErrorCode::NonPositiveWeight);
}

TEST(TaylorVariance, SrsReducesToSampleVarianceOverN) {
  EXPECT_NEAR(taylor_variance(Reals{1, 2, 3}, Reals{1, 1, 1}, Ids{1, 1, 1}, Ids{1, 2, 3}),
              1.0 / 3.0, 1e-15);
}

TEST(TaylorVariance, ConstantOutcomeIsZero) {
  EXPECT_EQ(taylor_variance(Reals{4, 4, 4, 4}, Reals{1, 2, 3, 4}, Ids{1, 1, 2, 2},
                            Ids{1, 2, 3, 4}),
            0.0);
}

TEST(TaylorVariance, IdenticalClusterTotalsGiveZero) {
  // Each stratum has two clusters whose linearised totals coincide.
  const Reals y{1, 3, 2, 2, 5, 1, 3, 3};
  const Reals w(8, 1.0);
  const Ids h{1, 1, 1, 1, 2, 2, 2, 2};
  const Ids c{1, 1, 2, 2, 3, 3, 4, 4};
  EXPECT_NEAR(taylor_variance(y, w, h, c), 0.0, 1e-15);
}

TEST(TaylorVariance, SingletonStratum) {
  const Reals y{1, 2, 3};
  const Reals w{1, 1, 1};
  const Ids h{1, 1, 2};
  const Ids c{1, 2, 3};
  EXPECT_EQ(code_of([&] { taylor_variance(y, w, h, c); }),
            ErrorCode::SingletonStratumCluster);
  TaylorOptions collapse;
  collapse.collapse_singletons = true;
  EXPECT_GE(taylor_variance(y, w, h, c, collapse), 0.0);
}

TEST(TaylorVariance, LocationEquivarianceAndScale) {
  oracle::Rng rng(5);
  std::normal_distribution<double> n;
  Reals y(30), w(30);
  Ids h(30), c(30);
  for (std::size_t i = 0; i < 30; ++i) {
    y[i] = n(rng);
    w[i] = 1.0 + std::abs(n(rng));
    c[i] = static_cast<std::int64_t>(i / 3);
    h[i] = c[i] / 4;
  }
  const double v = taylor_variance(y, w, h, c);
  const double m = weighted_mean(y, w);
  for (double shift : {-7.5, 0.25, 100.0}) {
    Reals ys = y;
    for (double& t : ys) t += shift;
    EXPECT_NEAR(weighted_mean(ys, w), m + shift, 1e-12);
    EXPECT_NEAR(taylor_variance(ys, w, h, c), v, 1e-12 * std::max(1.0, v));
  }
  for (double scale : {-2.0, 0.1, 9.0}) {
    Reals ys = y;
    for (double& t : ys) t *= scale;
    EXPECT_NEAR(taylor_variance(ys, w, h, c), scale * scale * v, 1e-12);
  }
}

TEST(TaylorVariance, MatchesHandFormula) {
  // Independent evaluation of sum_h n_h/(n_h-1) sum_j (U_hj - Ubar_h)^2.
  const Reals y{1.0, 4.0, 2.0, 7.0, 3.0, 0.5, 6.0};
  const Reals w{2.0, 1.0, 1.5, 3.0, 1.0, 2.5, 1.0};
  const Ids h{1, 1, 1, 2, 2, 2, 2};
  const Ids c{10, 10, 11, 20, 21, 21, 22};
  const double sw = std::accumulate(w.begin(), w.end(), 0.0);
  const double q = oracle::hajek(y, w);
  std::map<std::int64_t, std::map<std::int64_t, double>> U;
  for (std::size_t i = 0; i < y.size(); ++i) U[h[i]][c[i]] += w[i] * (y[i] - q) / sw;
  double expect = 0.0;
  for (const auto& [stratum, totals] : U) {
    const double nh = static_cast<double>(totals.size());
    double mean = 0.0;
    for (const auto& kv : totals) mean += kv.second / nh;
    double ss = 0.0;
    for (const auto& kv : totals) ss += (kv.second - mean) * (kv.second - mean);
    expect += nh / (nh - 1.0) * ss;
  }
  EXPECT_NEAR(taylor_variance(y, w, h, c), expect, 1e-15);
}

TEST(TaylorVariance, CloseToClusterBootstrap) {
  // Equal-size clusters keep the ratio close to linear so the bootstrap
  // target agrees with the linearisation to well inside 10%.
  oracle::Rng rng(20240601);
  std::uniform_int_distribution<int> strata(2, 3), clusters(2, 4);
  std::uniform_real_distribution<double> weight(1.0, 2.0);
  std::normal_distribution<double> n;
  for (int design = 0; design < 10; ++design) {
    Reals y, w;
    Ids h, c;
    std::int64_t next = 1;
    const int H = strata(rng);
    for (int s = 1; s <= H; ++s) {
      const int nh = clusters(rng);
      for (int j = 0; j < nh; ++j, ++next) {
        const double shift = n(rng);
        for (int u = 0; u < 2; ++u) {
          y.push_back(shift + n(rng));
          w.push_back(weight(rng));
          h.push_back(s);
          c.push_back(next);
        }
      }
    }
    const double boot = oracle::rao_wu_bootstrap_variance(y, w, h, c, 20000, rng);
    const double v = taylor_variance(y, w, h, c);
    EXPECT_LT(std::abs(v - boot) / boot, 0.10) << "design " << design;
  }
}

TEST(DesignDf, Examples) {
  Ids h, c;
  const int per[] = {10, 8, 6, 4};
  std::int64_t id = 1;
  for (int s = 0; s < 4; ++s) {
    for (int j = 0; j < per[s]; ++j, ++id) {
      h.push_back(s + 1);
      c.push_back(id);
      h.push_back(s + 1);
      c.push_back(id);
    }
  }
  EXPECT_EQ(design_df(h, c), 24.0);
  EXPECT_EQ(design_df(Ids{1, 1}, Ids{1, 2}), 1.0);
  EXPECT_EQ(code_of([] { design_df(Ids{1, 2, 3, 4}, Ids{1, 2, 3, 4}); }),
            ErrorCode::NonPositiveDf);
}

TEST(CiFrom, ZeroVarianceIsDegenerate) {
  const Interval ci = ci_from(PointEstimate{3.5, 0.0, 10.0});
  EXPECT_EQ(ci.lower, 3.5);
  EXPECT_EQ(ci.upper, 3.5);
}

TEST(CiFrom, NormalLimit) {
  const Interval ci = ci_from(PointEstimate{0.0, 1.0, 1e9}, 0.95);
  EXPECT_NEAR(ci.upper, 1.959964, 1e-4);
  EXPECT_NEAR(ci.lower, -1.959964, 1e-4);
}

TEST(CiFrom, TenDf) {
  const Interval ci = ci_from(PointEstimate{1.0, 4.0, 10.0}, 0.95);
  EXPECT_NEAR((ci.upper - ci.lower) / 2.0 / 2.0, 2.2281, 1e-4);
  EXPECT_TRUE(ci.contains(1.0));
}

TEST(CiFrom, InvalidLevel) {
  for (double level : {0.0, 1.0, -0.5, 1.5}) {
    EXPECT_EQ(code_of([&] { ci_from(PointEstimate{0, 1, 5}, level); }),
              ErrorCode::InvalidLevel);
  }
}

TEST(DesignEstimate, CombinesPieces) {
  const Reals y{1, 5, 2, 8, 3, 3};
  const Reals w{1, 2, 1, 2, 1, 2};
  const Ids h{1, 1, 1, 2, 2, 2};
  const Ids c{1, 1, 2, 3, 4, 5};
  const PointEstimate e = design_estimate(y, w, h, c);
  EXPECT_DOUBLE_EQ(e.estimate, weighted_mean(y, w));
  EXPECT_DOUBLE_EQ(e.variance, taylor_variance(y, w, h, c));
  EXPECT_EQ(e.df, 3.0);
}

}  // namespace
}  // namespace twophase
