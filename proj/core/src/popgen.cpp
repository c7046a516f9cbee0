#include "twophase/popgen.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "twophase/error.hpp"
#include "twophase/rng.hpp"

namespace twophase {

void validate(const PopulationConfig& c) {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::InvalidConfig, msg);
  };
  if (c.strata_cluster_counts.empty()) fail("no strata");
  for (int k : c.strata_cluster_counts) {
    if (k < 1) fail("every stratum needs at least one cluster");
  }
  if (c.n_continuous < 2) fail("outcome model needs x1 and x2");
  if (c.n_binary < 3) fail("outcome model needs z1, z2 and z3");
  if (!(c.cluster_size_min >= 1) || !(c.cluster_size_max >= c.cluster_size_min))
    fail("invalid cluster size bounds");
  if (!(c.cluster_size_mean > 0)) fail("cluster size mean must be positive");
  if (c.random_intercept_sd < 0 || c.noise_sd < 0 || c.continuous_sd < 0)
    fail("standard deviations must be non-negative");
  if (c.prevalence_low < 0 || c.prevalence_high > 1 ||
      c.prevalence_low > c.prevalence_high)
    fail("binary prevalence range must lie in [0, 1]");
}

double outcome_mean(double x1, double x2, double z1, double z2, double z3) {
  return 2.47 - 2.0 * x1 + x2 * x2 + 2.0 * z1 - z2 - 2.0 * z3 + x1 * z1;
}

Population generate_population(const PopulationConfig& config) {
  validate(config);
  const std::uint64_t seed = config.seed;
  Population pop;

  // Cluster sizes: rejection from Exp(mean) restricted to [min, max].
  Rng size_rng = make_rng(seed, "cluster-sizes");
  std::exponential_distribution<double> expo(1.0 / config.cluster_size_mean);
  std::int64_t cluster_id = 0;
  for (std::size_t h = 0; h < config.strata_cluster_counts.size(); ++h) {
    for (int j = 0; j < config.strata_cluster_counts[h]; ++j) {
      double size = 0;
      do {
        size = expo(size_rng);
      } while (size < config.cluster_size_min ||
               size > config.cluster_size_max);
      pop.cluster_sizes.push_back(static_cast<int>(std::lround(size)));
      pop.cluster_stratum.push_back(static_cast<std::int64_t>(h + 1));
      ++cluster_id;
    }
  }
  const std::size_t n_clusters = pop.cluster_sizes.size();
  const std::size_t N = static_cast<std::size_t>(
      std::accumulate(pop.cluster_sizes.begin(), pop.cluster_sizes.end(), 0LL));

  Rng q_rng = make_rng(seed, "cluster-intercepts");
  pop.cluster_intercepts.resize(n_clusters);
  for (auto& q : pop.cluster_intercepts) {
    q = config.random_intercept_sd *
        std::normal_distribution<double>(0.0, 1.0)(q_rng);
  }

  pop.stratum.reserve(N);
  pop.cluster.reserve(N);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    for (int u = 0; u < pop.cluster_sizes[c]; ++u) {
      pop.stratum.push_back(pop.cluster_stratum[c]);
      pop.cluster.push_back(static_cast<std::int64_t>(c + 1));
    }
  }

  // One stream per covariate column, so populations with more columns share
  // the leading columns with smaller ones.
  std::vector<Column> cols;
  for (int l = 0; l < config.n_continuous; ++l) {
    Rng rng = make_rng(seed, "x", static_cast<std::uint64_t>(l));
    std::normal_distribution<double> norm(0.0, 1.0);
    Column col{"x" + std::to_string(l + 1), ColumnKind::continuous, {}, {}};
    col.values.resize(N);
    for (auto& v : col.values) v = config.continuous_sd * norm(rng);
    cols.push_back(std::move(col));
  }
  for (int l = 0; l < config.n_binary; ++l) {
    Rng rng = make_rng(seed, "z", static_cast<std::uint64_t>(l));
    const double p = config.prevalence_low +
                     (config.prevalence_high - config.prevalence_low) *
                         std::uniform_real_distribution<double>(0, 1)(rng);
    pop.binary_prevalences.push_back(p);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Column col{"z" + std::to_string(l + 1), ColumnKind::binary, {}, {}};
    col.values.resize(N);
    for (auto& v : col.values) v = unif(rng) < p ? 1.0 : 0.0;
    cols.push_back(std::move(col));
  }

  Rng noise_rng = make_rng(seed, "outcome-noise");
  std::normal_distribution<double> norm(0.0, 1.0);
  const auto& x1 = cols[0].values;
  const auto& x2 = cols[1].values;
  const auto& z1 = cols[config.n_continuous].values;
  const auto& z2 = cols[config.n_continuous + 1].values;
  const auto& z3 = cols[config.n_continuous + 2].values;
  Column y{"y", ColumnKind::continuous, {}, {}};
  y.values.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double q =
        pop.cluster_intercepts[static_cast<std::size_t>(pop.cluster[i] - 1)];
    y.values[i] = outcome_mean(x1[i], x2[i], z1[i], z2[i], z3[i]) + q +
                  config.noise_sd * norm(noise_rng);
  }
  cols.push_back(std::move(y));
  pop.table = Table(std::move(cols));
  return pop;
}

double true_mean(const Population& pop) {
  const auto& y = pop.table.column("y").values;
  double sum = 0;
  for (double v : y) sum += v;
  return sum / static_cast<double>(y.size());
}

}  // namespace twophase
