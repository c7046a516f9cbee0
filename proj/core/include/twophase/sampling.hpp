#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "twophase/dataset.hpp"
#include "twophase/popgen.hpp"
#include "twophase/rng.hpp"

namespace twophase {

enum class Scenario { S1, S2, S3, S4 };

std::string_view scenario_name(Scenario s);
std::optional<Scenario> parse_scenario(std::string_view text);

struct ScenarioConfig {
  Scenario scenario = Scenario::S1;
  int n_continuous = 2;
  int n_binary = 3;
  double phase2_selection_prob = 0.5;
  std::vector<int> draws_per_stratum{10, 8, 6, 4};
  /// When false the phase-I weights are the PPS base weights only.
  bool phase1_nonresponse_adjustment = true;

  /// S1 is low dimensional (2 continuous, 3 binary); S2-S4 use 10 and 10.
  static ScenarioConfig make(Scenario s);
};

void validate(const ScenarioConfig& config);

struct UnitCovariates {
  double x1 = 0, x2 = 0, x3 = 0;
  double z1 = 0, z2 = 0, z3 = 0;
};

/// True phase-II response propensity of one unit.
double scenario_propensity(Scenario s, const UnitCovariates& u);
std::vector<double> scenario_propensities(Scenario s, const Table& units);

/// Inclusion probabilities n * size / total with certainty units (pi >= 1)
/// fixed at 1 and the remainder renormalised until none exceed 1.
std::vector<double> pps_inclusion_probabilities(std::span<const double> sizes,
                                                int n);

/// Systematic PPS over a uniformly random ordering; returns exactly n
/// distinct indices in increasing order.
std::vector<std::size_t> systematic_pps_sample(std::span<const double> sizes,
                                               int n, Rng& rng);

struct PpsSelection {
  std::vector<std::int64_t> clusters;
  std::vector<double> inclusion_probabilities;
  std::vector<double> base_weights;
};

PpsSelection pps_select_clusters(const Population& pop,
                                 std::span<const int> draws_per_stratum,
                                 Rng& rng);

double phase1_response_probability(double z1, double z2, double z3);
std::vector<int> phase1_response(const Table& units, Rng& rng);

std::vector<int> phase2_select(std::size_t n, double p, Rng& rng);

struct TwoPhaseSample {
  /// Phase-I respondents: covariates plus `y`, which is missing for every
  /// unit that is not a phase-II respondent.
  Table phase1;
  DesignFrame design;
  std::vector<double> true_phase2_propensity;
  /// Outcome for every phase-I respondent; only the benchmark may use it.
  std::vector<double> complete_outcome;
  std::vector<double> base_weight;
  double phase2_selection_prob = 0.5;
};

TwoPhaseSample draw_two_phase_sample(const Population& pop,
                                     const ScenarioConfig& scenario,
                                     std::uint64_t seed);

}  // namespace twophase
