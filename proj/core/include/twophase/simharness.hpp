#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "twophase/dataset.hpp"
#include "twophase/pipeline.hpp"
#include "twophase/popgen.hpp"
#include "twophase/sampling.hpp"

namespace twophase {

/// Replicate count, tree count and chain length presets.
struct Profile {
  std::string name;
  int replicates = 100;
  int n_trees = 50;
  int n_keep = 200;
  int imputations = 10;
  int n_burn = 1000;
  int thin = 10;
};

Profile desk_profile();
Profile paper_profile();
std::optional<Profile> find_profile(std::string_view name);

struct RunConfig {
  ScenarioConfig scenario;
  PopulationConfig population;
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  int replicates = 100;
  std::uint64_t seed = 1;
  PipelineOptions pipeline;
  /// Worker threads; 0 uses the hardware concurrency.
  unsigned threads = 0;

  /// Scenario defaults with the tree and chain settings of `profile`
  /// applied to every BART fit.
  static RunConfig make(Scenario scenario, const Profile& profile);
};

void validate(const RunConfig& config);

struct ReplicateResult {
  int index = 0;
  double truth = 0.0;
  std::vector<MethodOutcome> outcomes;  // in config.methods order
};

/// Regenerates the population and two-phase sample from (seed, index) and
/// runs every configured arm.
ReplicateResult run_replicate(const RunConfig& config, int replicate_index);

struct MetricsRow {
  Scenario scenario = Scenario::S1;
  Method method = Method::Benchmark;
  double absolute_bias = 0.0;  // x100
  double rmse = 0.0;           // x100
  double coverage = 0.0;       // percent
  double width = 0.0;          // x100
  int replicates = 0;          // successful
  int failures = 0;

  double failure_rate() const {
    const int total = replicates + failures;
    return total > 0 ? static_cast<double>(failures) / total : 0.0;
  }
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  const MetricsRow* find(Scenario s, Method m) const;
  Records records() const;
};

/// Metrics of one arm from its successful replicates.
MetricsRow metrics_row(std::span<const double> estimates,
                       std::span<const double> lower,
                       std::span<const double> upper,
                       std::span<const double> truths);

/// Aggregates replicate results in replicate-index order. Throws
/// NoSuccessfulReplicates when an arm never succeeded.
MetricsTable compute_metrics(Scenario scenario,
                             std::span<const Method> methods,
                             std::vector<ReplicateResult> replicates);

struct SimulationResult {
  MetricsTable metrics;
  std::vector<ReplicateResult> replicates;
};

using ProgressFn = std::function<void(int done, int total)>;

/// Runs every replicate on a worker pool and aggregates the metrics.
SimulationResult run_simulation(const RunConfig& config,
                                const ProgressFn& progress = {});

/// Runs the given replicate indices only (e.g. a fixed subset).
SimulationResult run_simulation(const RunConfig& config,
                                std::span<const int> replicate_indices,
                                const ProgressFn& progress = {});

void write_results(const MetricsTable& table, const std::filesystem::path& path,
                   OutputFormat format);

/// Real-data run of one arm on an ingested table.
struct AnalyzeConfig {
  std::filesystem::path data;
  std::string stratum;
  std::string cluster;
  std::string weight;
  /// Phase-II respondent indicator.
  std::string phase2;
  /// Optional phase-II selection indicator; all units when empty.
  std::string selected;
  std::string outcome;
  Method method = Method::MI_BART;
  double phase2_selection_prob = 1.0;
  std::uint64_t seed = 1;
  PipelineOptions pipeline;
};

/// Loads the table (schema inferred), binds the design roles and runs the
/// arm. Estimation failures are thrown, not reported.
MethodOutcome analyze(const AnalyzeConfig& config);

/// One row: estimate, lower, upper, width.
Records outcome_records(const MethodOutcome& outcome);

/// Per-replicate, per-arm rows: replicate, method, ok, estimate, lower,
/// upper, truth, error.
Records replicate_records(std::span<const ReplicateResult> replicates);

}  // namespace twophase
