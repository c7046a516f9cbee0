#pragma once

#include <cstdint>
#include <span>

namespace twophase {

struct PointEstimate {
  double estimate = 0.0;
  double variance = 0.0;
  double df = 1.0;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  double width() const { return upper - lower; }
  bool contains(double v) const { return lower <= v && v <= upper; }
};

/// Hajek mean sum(w y) / sum(w).
double weighted_mean(std::span<const double> y, std::span<const double> w);

struct TaylorOptions {
  /// Pair each single-cluster stratum with an adjacent stratum (in id
  /// order) instead of failing.
  bool collapse_singletons = false;
};

/// With-replacement first-stage linearisation variance of the Hajek mean
/// for a stratified cluster sample.
double taylor_variance(std::span<const double> y, std::span<const double> w,
                       std::span<const std::int64_t> stratum_id,
                       std::span<const std::int64_t> cluster_id,
                       const TaylorOptions& options = {});

/// Sampled clusters minus strata.
double design_df(std::span<const std::int64_t> stratum_id,
                 std::span<const std::int64_t> cluster_id);

/// Weighted mean with its Taylor variance and design df.
PointEstimate design_estimate(std::span<const double> y,
                              std::span<const double> w,
                              std::span<const std::int64_t> stratum_id,
                              std::span<const std::int64_t> cluster_id,
                              const TaylorOptions& options = {});

/// est +/- t_{df,(1+level)/2} sqrt(variance).
Interval ci_from(const PointEstimate& est, double level = 0.95);

}  // namespace twophase
