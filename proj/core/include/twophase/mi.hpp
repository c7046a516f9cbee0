#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "twophase/bart.hpp"
#include "twophase/dataset.hpp"
#include "twophase/estimators.hpp"
#include "twophase/rng.hpp"

namespace twophase {

/// Phase-I data with the outcome column filled in from one posterior draw.
struct CompletedDataset {
  Table data;
  std::string outcome_name;
  /// Index of the chain draw that produced the imputations.
  std::size_t draw = 0;

  const std::vector<double>& outcome() const {
    return data.column(outcome_name).values;
  }
};

/// Imputes every missing entry of `observed` from the last D retained draws
/// of `chain`. `features` holds the model covariates for every phase-I unit
/// and `groups` their cluster ids (random-intercept chains only). Observed
/// values pass through unchanged.
std::vector<CompletedDataset> impute_datasets(
    const PosteriorChain& chain, const Table& features,
    std::span<const double> observed, int D, Rng& rng,
    std::span<const std::int64_t> groups = {},
    const std::string& outcome_name = "y");

struct MIResult {
  std::vector<double> estimates;
  std::vector<double> variances;
  double estimate = 0.0;
  double within = 0.0;
  double between = 0.0;
  double total = 0.0;
  double df = 0.0;
  Interval interval;
  int D = 0;
};

/// Degrees of freedom used when the between-imputation variance is zero.
inline constexpr double kMaxRubinDf = 1e6;

MIResult rubin_combine(std::span<const double> estimates,
                       std::span<const double> variances, double level = 0.95);

/// Hajek mean and Taylor variance of each completed data set over the
/// phase-I design, combined by Rubin's rules.
MIResult mi_estimate_mean(const std::vector<CompletedDataset>& completed,
                          const DesignFrame& design, double level = 0.95,
                          const TaylorOptions& taylor = {});

/// One row: estimate, lower, upper, width.
Records mi_records(const MIResult& result);
void write_results(const MIResult& result, const std::filesystem::path& path,
                   OutputFormat format);

}  // namespace twophase
