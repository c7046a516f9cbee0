#pragma once

#include <cstdint>
#include <vector>

#include "twophase/dataset.hpp"

namespace twophase {

struct PopulationConfig {
  std::vector<int> strata_cluster_counts{25, 20, 15, 10};
  // Cluster sizes follow an exponential law truncated to [min, max].
  double cluster_size_mean = 200.0;
  double cluster_size_min = 100.0;
  double cluster_size_max = 300.0;
  int n_continuous = 2;
  int n_binary = 3;
  double random_intercept_sd = 1.0;
  double noise_sd = 1.0;
  // Test hooks: scale of the x columns and the range of binary prevalences.
  double continuous_sd = 1.0;
  double prevalence_low = 0.4;
  double prevalence_high = 0.6;
  std::uint64_t seed = 1;
};

void validate(const PopulationConfig& config);

/// Finite population. Units are stored cluster by cluster; stratum and
/// cluster ids are 1-based and cluster ids are unique across strata.
struct Population {
  Table table;  // x1..xL1, z1..zL2, y
  std::vector<std::int64_t> stratum;
  std::vector<std::int64_t> cluster;
  std::vector<double> cluster_intercepts;        // indexed by cluster id - 1
  std::vector<int> cluster_sizes;                // indexed by cluster id - 1
  std::vector<std::int64_t> cluster_stratum;     // indexed by cluster id - 1
  std::vector<double> binary_prevalences;        // one per z column

  std::size_t size() const { return table.rows(); }
  std::size_t cluster_count() const { return cluster_sizes.size(); }
};

/// Noise-free part of the outcome model (everything except the cluster
/// intercept and the unit error).
double outcome_mean(double x1, double x2, double z1, double z2, double z3);

Population generate_population(const PopulationConfig& config);

double true_mean(const Population& pop);

}  // namespace twophase
