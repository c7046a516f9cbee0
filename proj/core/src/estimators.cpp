#include "twophase/estimators.hpp"

#include <cmath>
#include <map>
#include <set>
#include <string>

#include "twophase/error.hpp"
#include "twophase/stats.hpp"

namespace twophase {

namespace {

void check_weighted(std::span<const double> y, std::span<const double> w) {
  if (y.empty()) throw Error(ErrorCode::EmptyInput, "no observations");
  if (y.size() != w.size()) {
    throw Error(ErrorCode::ColumnMismatch, "values and weights differ in length");
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(w[i] > 0) || !std::isfinite(w[i])) {
      throw Error(ErrorCode::NonPositiveWeight, "weight must be positive",
                  static_cast<std::int64_t>(i + 1));
    }
    if (!std::isfinite(y[i])) {
      throw Error(ErrorCode::NonFiniteInput, "value is missing or non-finite",
                  static_cast<std::int64_t>(i + 1));
    }
  }
}

void check_design(std::size_t n, std::span<const std::int64_t> stratum,
                  std::span<const std::int64_t> cluster) {
  if (stratum.size() != n || cluster.size() != n) {
    throw Error(ErrorCode::ColumnMismatch,
                "stratum and cluster ids must cover every unit");
  }
}

}  // namespace

double weighted_mean(std::span<const double> y, std::span<const double> w) {
  check_weighted(y, w);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += w[i] * y[i];
    den += w[i];
  }
  return num / den;
}

double taylor_variance(std::span<const double> y, std::span<const double> w,
                       std::span<const std::int64_t> stratum_id,
                       std::span<const std::int64_t> cluster_id,
                       const TaylorOptions& options) {
  const double q = weighted_mean(y, w);
  check_design(y.size(), stratum_id, cluster_id);
  double wsum = 0.0;
  for (double v : w) wsum += v;

  // Cluster totals of the linearised values, grouped by stratum.
  std::map<std::int64_t, std::map<std::int64_t, double>> totals;
  for (std::size_t i = 0; i < y.size(); ++i) {
    totals[stratum_id[i]][cluster_id[i]] += w[i] * (y[i] - q) / wsum;
  }

  if (options.collapse_singletons) {
    std::vector<std::int64_t> ids;
    for (const auto& [h, c] : totals) ids.push_back(h);
    for (std::size_t k = 0; k < ids.size() && ids.size() > 1; ++k) {
      auto it = totals.find(ids[k]);
      if (it == totals.end() || it->second.size() != 1) continue;
      // Merge into the next surviving stratum, or the previous one at the end.
      std::int64_t into = ids[k];
      for (std::size_t m = k + 1; m < ids.size(); ++m) {
        if (totals.count(ids[m])) {
          into = ids[m];
          break;
        }
      }
      if (into == ids[k]) {
        for (std::size_t m = k; m-- > 0;) {
          if (totals.count(ids[m])) {
            into = ids[m];
            break;
          }
        }
      }
      if (into == ids[k]) break;
      for (const auto& [c, u] : it->second) totals[into][c] += u;
      totals.erase(it);
    }
  }

  double var = 0.0;
  for (const auto& [h, clusters] : totals) {
    const auto nh = static_cast<double>(clusters.size());
    if (clusters.size() < 2) {
      throw Error(ErrorCode::SingletonStratumCluster,
                  "stratum " + std::to_string(h) + " has a single sampled cluster",
                  h);
    }
    double mean = 0.0;
    for (const auto& [c, u] : clusters) mean += u;
    mean /= nh;
    double ss = 0.0;
    for (const auto& [c, u] : clusters) ss += (u - mean) * (u - mean);
    var += nh / (nh - 1.0) * ss;
  }
  return var;
}

double design_df(std::span<const std::int64_t> stratum_id,
                 std::span<const std::int64_t> cluster_id) {
  check_design(stratum_id.size(), stratum_id, cluster_id);
  std::set<std::pair<std::int64_t, std::int64_t>> clusters;
  std::set<std::int64_t> strata;
  for (std::size_t i = 0; i < stratum_id.size(); ++i) {
    strata.insert(stratum_id[i]);
    clusters.emplace(stratum_id[i], cluster_id[i]);
  }
  const double df = static_cast<double>(clusters.size()) -
                    static_cast<double>(strata.size());
  if (!(df > 0)) {
    throw Error(ErrorCode::NonPositiveDf,
                "design has no degrees of freedom (" +
                    std::to_string(clusters.size()) + " clusters, " +
                    std::to_string(strata.size()) + " strata)");
  }
  return df;
}

PointEstimate design_estimate(std::span<const double> y,
                              std::span<const double> w,
                              std::span<const std::int64_t> stratum_id,
                              std::span<const std::int64_t> cluster_id,
                              const TaylorOptions& options) {
  PointEstimate est;
  est.estimate = weighted_mean(y, w);
  est.variance = taylor_variance(y, w, stratum_id, cluster_id, options);
  est.df = design_df(stratum_id, cluster_id);
  return est;
}

Interval ci_from(const PointEstimate& est, double level) {
  if (!(level > 0 && level < 1)) {
    throw Error(ErrorCode::InvalidLevel, "confidence level must lie in (0, 1)");
  }
  if (!(est.df > 0)) throw Error(ErrorCode::NonPositiveDf, "df must be positive");
  if (!(est.variance >= 0)) {
    throw Error(ErrorCode::NonFiniteInput, "variance must be non-negative");
  }
  const double half =
      stats::t_quantile(est.df, 0.5 * (1.0 + level)) * std::sqrt(est.variance);
  return {est.estimate - half, est.estimate + half};
}

}  // namespace twophase
