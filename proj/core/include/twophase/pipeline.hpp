#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "twophase/bart.hpp"
#include "twophase/dataset.hpp"
#include "twophase/estimators.hpp"
#include "twophase/mi.hpp"
#include "twophase/propensity.hpp"
#include "twophase/sampling.hpp"

namespace twophase {

enum class Method { Benchmark, WT_LGM, WT_CHAID, WT_BART, WT_rBART, MI_BART, MI_rBART };

inline constexpr Method kAllMethods[] = {
    Method::Benchmark, Method::WT_LGM,  Method::WT_CHAID, Method::WT_BART,
    Method::WT_rBART,  Method::MI_BART, Method::MI_rBART};

/// Display name, e.g. "WT-LGM".
std::string_view method_name(Method m);
/// Accepts display names in any case, e.g. "mi-bart".
std::optional<Method> parse_method(std::string_view text);

/// One two-phase data set ready for estimation.
struct StudyData {
  /// Auxiliary covariates (x, z) for every phase-I unit.
  Table auxiliary;
  DesignFrame design;
  /// Missing wherever the unit is not a phase-II respondent.
  std::vector<double> outcome;
  bool binary_outcome = false;
  /// Full phase-I outcome; only the benchmark uses it.
  std::optional<std::vector<double>> complete_outcome;
  double phase2_selection_prob = 1.0;

  static StudyData from_sample(const TwoPhaseSample& sample);
};

struct PipelineOptions {
  AdjustmentOptions adjustment;
  BartOptions imputation_bart;
  int imputations = 10;
  double level = 0.95;
  TaylorOptions taylor;
};

struct MethodOutcome {
  Method method = Method::Benchmark;
  bool ok = false;
  PointEstimate estimate;
  Interval interval;
  std::string error;
  std::optional<MIResult> mi;
};

/// Runs estimation arms on one data set. Propensity models are fitted once
/// and shared between arms; every model draws from its own RNG stream keyed
/// by `seed`, so the set of arms requested never changes any arm's numbers.
class MethodPipeline {
 public:
  MethodPipeline(const StudyData& data, const PipelineOptions& options,
                 std::uint64_t seed);

  /// Never throws for estimation failures; they are reported in the outcome.
  MethodOutcome run(Method method);

  const AdjustmentResult& adjustment(AdjustmentMethod method);

 private:
  MethodOutcome benchmark();
  MethodOutcome weighted(AdjustmentMethod method);
  MethodOutcome imputed(AdjustmentMethod method);

  PropensityFrame frame_for(std::span<const std::size_t> rows) const;

  const StudyData& data_;
  PipelineOptions options_;
  std::uint64_t seed_;
  std::vector<std::size_t> all_;
  std::vector<std::size_t> selected_;
  std::vector<std::size_t> respondents_;
  std::map<AdjustmentMethod, AdjustmentResult> cache_;
};

}  // namespace twophase
