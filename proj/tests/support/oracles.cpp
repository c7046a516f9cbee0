#include "oracles.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

namespace oracle {

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_pvalue(std::vector<double> sample, const std::function<double(double)>& cdf) {
  const double n = static_cast<double>(sample.size());
  const double d = ks_statistic(std::move(sample), cdf);
  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 0.2) return 1.0;
  // Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)
  double p = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    p += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

double chisq_sf(double x, double df) {
  if (x <= 0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double scaled_inv_chisq_cdf(double x, double df, double scale) {
  if (x <= 0) return 0.0;
  return chisq_sf(scale / x, df);
}

double chisq_gof_pvalue(std::span<const double> observed, std::span<const double> probs,
                        double min_expected) {
  if (observed.size() != probs.size() || observed.empty()) {
    throw std::invalid_argument("observed and probs differ in length");
  }
  const double total = std::accumulate(observed.begin(), observed.end(), 0.0);
  std::vector<double> obs, expct;
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    o_acc += observed[k];
    e_acc += probs[k] * total;
    if (e_acc >= min_expected) {
      obs.push_back(o_acc);
      expct.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (e_acc > 0 || o_acc > 0) {
    if (expct.empty()) {
      obs.push_back(o_acc);
      expct.push_back(e_acc);
    } else {
      obs.back() += o_acc;
      expct.back() += e_acc;
    }
  }
  if (expct.size() < 2) return 1.0;
  double stat = 0.0;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    stat += (obs[k] - expct[k]) * (obs[k] - expct[k]) / expct[k];
  }
  return chisq_sf(stat, static_cast<double>(obs.size() - 1));
}

double hajek(std::span<const double> y, std::span<const double> w) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += w[i] * y[i];
    den += w[i];
  }
  return num / den;
}

double rao_wu_bootstrap_variance(std::span<const double> y, std::span<const double> w,
                                 std::span<const std::int64_t> stratum,
                                 std::span<const std::int64_t> cluster, int resamples,
                                 Rng& rng) {
  // stratum -> its clusters -> their units
  std::map<std::int64_t, std::map<std::int64_t, std::vector<std::size_t>>> layout;
  for (std::size_t i = 0; i < y.size(); ++i) layout[stratum[i]][cluster[i]].push_back(i);

  std::vector<double> wb(w.size());
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    std::fill(wb.begin(), wb.end(), 0.0);
    for (const auto& [h, clusters] : layout) {
      const std::size_t nh = clusters.size();
      std::vector<const std::vector<std::size_t>*> members;
      for (const auto& [c, units] : clusters) members.push_back(&units);
      std::vector<int> times(nh, 0);
      std::uniform_int_distribution<std::size_t> pick(0, nh - 1);
      for (std::size_t k = 0; k + 1 < nh; ++k) ++times[pick(rng)];
      const double factor = static_cast<double>(nh) / static_cast<double>(nh - 1);
      for (std::size_t j = 0; j < nh; ++j) {
        for (std::size_t i : *members[j]) wb[i] = w[i] * factor * times[j];
      }
    }
    stats.push_back(hajek(y, wb));
  }
  const double mean = std::accumulate(stats.begin(), stats.end(), 0.0) / resamples;
  double ss = 0.0;
  for (double s : stats) ss += (s - mean) * (s - mean);
  return ss / resamples;
}

std::vector<double> pps_probabilities(std::span<const double> sizes, int n) {
  std::vector<double> pi(sizes.size(), 0.0);
  std::vector<bool> fixed(sizes.size(), false);
  int left = n;
  bool changed = true;
  while (changed && left > 0) {
    changed = false;
    double total = 0.0;
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      if (!fixed[j]) total += sizes[j];
    }
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      if (!fixed[j]) pi[j] = left * sizes[j] / total;
    }
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      if (!fixed[j] && pi[j] >= 1.0) {
        pi[j] = 1.0;
        fixed[j] = true;
        --left;
        changed = true;
      }
    }
  }
  return pi;
}

namespace {

struct PriorTreeSampler {
  const std::vector<std::vector<double>>& columns;
  double alpha, beta;
  std::size_t min_leaf;
  Rng& rng;

  // Depth of the sampled subtree, or -1 when the draw is invalid.
  int grow(const std::vector<std::size_t>& units, int depth) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) >= alpha * std::pow(1.0 + depth, -beta)) return depth;
    const auto& col =
        columns[std::uniform_int_distribution<std::size_t>(0, columns.size() - 1)(rng)];
    double mx = -INFINITY;
    for (std::size_t i : units) mx = std::max(mx, col[i]);
    std::vector<double> below;
    for (std::size_t i : units) {
      if (col[i] < mx) below.push_back(col[i]);
    }
    if (below.empty()) return -1;
    const double cut =
        below[std::uniform_int_distribution<std::size_t>(0, below.size() - 1)(rng)];
    std::vector<std::size_t> left, right;
    for (std::size_t i : units) (col[i] <= cut ? left : right).push_back(i);
    if (left.size() < min_leaf || right.size() < min_leaf) return -1;
    const int dl = grow(left, depth + 1);
    if (dl < 0) return -1;
    const int dr = grow(right, depth + 1);
    if (dr < 0) return -1;
    return std::max(dl, dr);
  }
};

}  // namespace

std::vector<double> prior_depth_distribution(const std::vector<std::vector<double>>& columns,
                                             double alpha, double beta, int min_leaf,
                                             int max_depth_bin, long accepted, Rng& rng) {
  std::vector<std::size_t> all(columns.front().size());
  std::iota(all.begin(), all.end(), 0);
  PriorTreeSampler s{columns, alpha, beta, static_cast<std::size_t>(min_leaf), rng};
  std::vector<double> counts(static_cast<std::size_t>(max_depth_bin) + 1, 0.0);
  long got = 0;
  while (got < accepted) {
    const int d = s.grow(all, 0);
    if (d < 0) continue;
    counts[static_cast<std::size_t>(std::min(d, max_depth_bin))] += 1.0;
    ++got;
  }
  for (double& c : counts) c /= static_cast<double>(accepted);
  return counts;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("twophase-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::filesystem::path TempDir::write(const std::string& name, const std::string& text) const {
  const auto p = path_ / name;
  std::ofstream out(p, std::ios::binary);
  out << text;
  return p;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace oracle
