#include "twophase/sampling.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "twophase/error.hpp"
#include "twophase/propensity.hpp"
#include "twophase/stats.hpp"

namespace twophase {

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::S1: return "S1";
    case Scenario::S2: return "S2";
    case Scenario::S3: return "S3";
    case Scenario::S4: return "S4";
  }
  return "?";
}

std::optional<Scenario> parse_scenario(std::string_view t) {
  if (t == "s1" || t == "S1") return Scenario::S1;
  if (t == "s2" || t == "S2") return Scenario::S2;
  if (t == "s3" || t == "S3") return Scenario::S3;
  if (t == "s4" || t == "S4") return Scenario::S4;
  return std::nullopt;
}

ScenarioConfig ScenarioConfig::make(Scenario s) {
  ScenarioConfig c;
  c.scenario = s;
  if (s != Scenario::S1) {
    c.n_continuous = 10;
    c.n_binary = 10;
  }
  return c;
}

void validate(const ScenarioConfig& c) {
  const bool low = c.scenario == Scenario::S1;
  if (low && (c.n_continuous != 2 || c.n_binary != 3)) {
    throw Error(ErrorCode::InvalidConfig, "S1 uses 2 continuous, 3 binary");
  }
  if (!low && (c.n_continuous != 10 || c.n_binary != 10)) {
    throw Error(ErrorCode::InvalidConfig,
                "S2-S4 use 10 continuous, 10 binary covariates");
  }
  if (!(c.phase2_selection_prob > 0 && c.phase2_selection_prob <= 1)) {
    throw Error(ErrorCode::InvalidProbability,
                "phase-II selection probability must be in (0, 1]");
  }
}

double scenario_propensity(Scenario s, const UnitCovariates& u) {
  const double common =
      1.0 + 2.0 * u.x1 + 2.0 * u.z1 + u.z2 - 2.0 * u.z3 - u.x1 * u.z1;
  switch (s) {
    case Scenario::S1:
    case Scenario::S2:
      return stats::inv_logit(common + 1.5 * u.x2 * u.x2);
    case Scenario::S3:
      return stats::inv_logit(common - 1.5 * u.x2 * u.x2);
    case Scenario::S4:
      return stats::inv_logit(common - 1.5 * u.x3 * u.x3);
  }
  return 0;
}

namespace {

const std::vector<double>& require(const Table& t, const char* name) {
  if (!t.has(name)) {
    throw Error(ErrorCode::MissingCovariate,
                std::string("covariate ") + name + " is required");
  }
  const auto& col = t.column(name);
  for (std::size_t i = 0; i < col.size(); ++i) {
    if (is_missing(col.values[i])) {
      throw Error(ErrorCode::MissingCovariate,
                  std::string("covariate ") + name + " is missing",
                  static_cast<std::int64_t>(i + 1));
    }
  }
  return col.values;
}

}  // namespace

std::vector<double> scenario_propensities(Scenario s, const Table& units) {
  const auto& x1 = require(units, "x1");
  const auto& z1 = require(units, "z1");
  const auto& z2 = require(units, "z2");
  const auto& z3 = require(units, "z3");
  const std::vector<double>* x2 = nullptr;
  const std::vector<double>* x3 = nullptr;
  if (s == Scenario::S4) {
    x3 = &require(units, "x3");
  } else {
    x2 = &require(units, "x2");
  }
  std::vector<double> out(units.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    UnitCovariates u;
    u.x1 = x1[i];
    u.x2 = x2 ? (*x2)[i] : 0.0;
    u.x3 = x3 ? (*x3)[i] : 0.0;
    u.z1 = z1[i];
    u.z2 = z2[i];
    u.z3 = z3[i];
    out[i] = scenario_propensity(s, u);
  }
  return out;
}

std::vector<double> pps_inclusion_probabilities(std::span<const double> sizes,
                                                int n) {
  const std::size_t K = sizes.size();
  if (n < 0 || static_cast<std::size_t>(n) > K) {
    throw Error(ErrorCode::TooManyDraws,
                "cannot draw " + std::to_string(n) + " of " +
                    std::to_string(K) + " clusters");
  }
  for (double s : sizes) {
    if (!(s > 0)) {
      throw Error(ErrorCode::NonPositiveInput, "cluster sizes must be positive");
    }
  }
  std::vector<double> pi(K, 0.0);
  std::vector<bool> certain(K, false);
  int remaining = n;
  while (remaining > 0) {
    double total = 0;
    for (std::size_t j = 0; j < K; ++j) {
      if (!certain[j]) total += sizes[j];
    }
    bool found = false;
    for (std::size_t j = 0; j < K; ++j) {
      if (certain[j]) continue;
      pi[j] = remaining * sizes[j] / total;
      if (pi[j] >= 1.0) {
        found = true;
      }
    }
    if (!found) break;
    for (std::size_t j = 0; j < K; ++j) {
      if (!certain[j] && pi[j] >= 1.0) {
        certain[j] = true;
        pi[j] = 1.0;
        --remaining;
      }
    }
    if (remaining == 0) {
      for (std::size_t j = 0; j < K; ++j) {
        if (!certain[j]) pi[j] = 0.0;
      }
    }
  }
  return pi;
}

std::vector<std::size_t> systematic_pps_sample(std::span<const double> sizes,
                                               int n, Rng& rng) {
  const auto pi = pps_inclusion_probabilities(sizes, n);
  std::vector<std::size_t> selected;
  std::vector<std::size_t> rest;
  for (std::size_t j = 0; j < pi.size(); ++j) {
    if (pi[j] >= 1.0) {
      selected.push_back(j);
    } else if (pi[j] > 0.0) {
      rest.push_back(j);
    }
  }
  const int n_rest = n - static_cast<int>(selected.size());
  if (n_rest > 0) {
    std::shuffle(rest.begin(), rest.end(), rng);
    const double start = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0;
    int k = 0;
    for (std::size_t idx = 0; idx < rest.size() && k < n_rest; ++idx) {
      const double next = cum + pi[rest[idx]];
      // Selection point start + k falls in (cum, next].
      if (start + k > cum && start + k <= next) {
        selected.push_back(rest[idx]);
        ++k;
      }
      cum = next;
    }
    // Floating-point shortfall at the very end of the cumulative range.
    for (std::size_t idx = rest.size(); k < n_rest && idx-- > 0;) {
      if (std::find(selected.begin(), selected.end(), rest[idx]) ==
          selected.end()) {
        selected.push_back(rest[idx]);
        ++k;
      }
    }
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

PpsSelection pps_select_clusters(const Population& pop,
                                 std::span<const int> draws_per_stratum,
                                 Rng& rng) {
  std::int64_t n_strata = 0;
  for (auto h : pop.cluster_stratum) n_strata = std::max(n_strata, h);
  if (static_cast<std::int64_t>(draws_per_stratum.size()) != n_strata) {
    throw Error(ErrorCode::InvalidConfig,
                "draws_per_stratum needs one entry per stratum");
  }
  PpsSelection out;
  for (std::int64_t h = 1; h <= n_strata; ++h) {
    std::vector<std::size_t> ids;
    std::vector<double> sizes;
    for (std::size_t c = 0; c < pop.cluster_count(); ++c) {
      if (pop.cluster_stratum[c] == h) {
        ids.push_back(c);
        sizes.push_back(pop.cluster_sizes[c]);
      }
    }
    const int n_h = draws_per_stratum[static_cast<std::size_t>(h - 1)];
    const auto pi = pps_inclusion_probabilities(sizes, n_h);
    for (std::size_t k : systematic_pps_sample(sizes, n_h, rng)) {
      out.clusters.push_back(static_cast<std::int64_t>(ids[k] + 1));
      out.inclusion_probabilities.push_back(pi[k]);
      out.base_weights.push_back(1.0 / pi[k]);
    }
  }
  return out;
}

double phase1_response_probability(double z1, double z2, double z3) {
  return stats::inv_logit(-1.0 + 2.0 * z1 + 2.0 * z2 - z3);
}

std::vector<int> phase1_response(const Table& units, Rng& rng) {
  const auto& z1 = require(units, "z1");
  const auto& z2 = require(units, "z2");
  const auto& z3 = require(units, "z3");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> r(units.rows());
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = unif(rng) < phase1_response_probability(z1[i], z2[i], z3[i]);
  }
  return r;
}

std::vector<int> phase2_select(std::size_t n, double p, Rng& rng) {
  if (!(p > 0 && p <= 1)) {
    throw Error(ErrorCode::InvalidProbability,
                "selection probability must be in (0, 1]");
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> s(n);
  for (auto& v : s) v = unif(rng) < p;
  return s;
}

TwoPhaseSample draw_two_phase_sample(const Population& pop,
                                     const ScenarioConfig& scenario,
                                     std::uint64_t seed) {
  validate(scenario);
  const std::size_t n_cont = static_cast<std::size_t>(scenario.n_continuous);
  const std::size_t n_bin = static_cast<std::size_t>(scenario.n_binary);
  if (pop.table.cols() != n_cont + n_bin + 1 ||
      !pop.table.has("x" + std::to_string(n_cont)) ||
      !pop.table.has("z" + std::to_string(n_bin))) {
    throw Error(ErrorCode::InvalidConfig,
                "population dimensions do not match the scenario");
  }

  // Stage 1: PPS selection of clusters.
  Rng pps_rng = make_rng(seed, "pps");
  const PpsSelection sel =
      pps_select_clusters(pop, scenario.draws_per_stratum, pps_rng);
  std::vector<double> cluster_weight(pop.cluster_count(), 0.0);
  for (std::size_t k = 0; k < sel.clusters.size(); ++k) {
    cluster_weight[static_cast<std::size_t>(sel.clusters[k] - 1)] =
        sel.base_weights[k];
  }
  std::vector<std::size_t> invited;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (cluster_weight[static_cast<std::size_t>(pop.cluster[i] - 1)] > 0) {
      invited.push_back(i);
    }
  }
  const Table invited_units = pop.table.subset_rows(invited);

  // Stage 2: phase-I unit response.
  Rng r1_rng = make_rng(seed, "phase1-response");
  const std::vector<int> responded = phase1_response(invited_units, r1_rng);

  std::vector<double> base(invited.size());
  for (std::size_t k = 0; k < invited.size(); ++k) {
    base[k] =
        cluster_weight[static_cast<std::size_t>(pop.cluster[invited[k]] - 1)];
  }
  std::vector<double> phase1_weight = base;
  if (scenario.phase1_nonresponse_adjustment) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(invited.size()), 4);
    const auto& z1 = invited_units.column("z1").values;
    const auto& z2 = invited_units.column("z2").values;
    const auto& z3 = invited_units.column("z3").values;
    for (std::size_t k = 0; k < invited.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      X(r, 0) = 1.0;
      X(r, 1) = z1[k];
      X(r, 2) = z2[k];
      X(r, 3) = z3[k];
    }
    const LogisticFit fit = fit_logistic(X, responded);
    const Eigen::VectorXd eta = X * fit.coefficients;
    for (std::size_t k = 0; k < invited.size(); ++k) {
      phase1_weight[k] /= stats::inv_logit(eta(static_cast<Eigen::Index>(k)));
    }
  }

  std::vector<std::size_t> resp_local;
  for (std::size_t k = 0; k < invited.size(); ++k) {
    if (responded[k]) resp_local.push_back(k);
  }
  Table phase1_units = invited_units.subset_rows(resp_local);
  const std::size_t n1 = resp_local.size();

  // Stage 3: phase-II subsample and its scenario-specific response.
  Rng s2_rng = make_rng(seed, "phase2-select");
  const std::vector<int> selected =
      phase2_select(n1, scenario.phase2_selection_prob, s2_rng);
  const std::vector<double> propensity =
      scenario_propensities(scenario.scenario, phase1_units);
  Rng r2_rng = make_rng(seed, "phase2-response");
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  TwoPhaseSample out;
  out.phase2_selection_prob = scenario.phase2_selection_prob;
  out.true_phase2_propensity = propensity;
  DesignFrame& f = out.design;
  f.phase2_selected = selected;
  f.phase2_respondent.resize(n1);
  for (std::size_t i = 0; i < n1; ++i) {
    // Draw for every unit so the stream does not depend on selection.
    const double u = unif(r2_rng);
    f.phase2_respondent[i] = selected[i] && u < propensity[i];
  }
  for (std::size_t k : resp_local) {
    const std::size_t i = invited[k];
    f.stratum_id.push_back(pop.stratum[i]);
    f.cluster_id.push_back(pop.cluster[i]);
    f.weight.push_back(phase1_weight[k]);
    out.base_weight.push_back(base[k]);
  }
  validate_design(f);

  out.complete_outcome = phase1_units.column("y").values;
  std::vector<Column> cols;
  for (const auto& col : phase1_units.columns()) {
    if (col.name == "y") continue;
    cols.push_back(col);
  }
  Column y{"y", ColumnKind::continuous, out.complete_outcome, {}};
  for (std::size_t i = 0; i < n1; ++i) {
    if (!f.phase2_respondent[i]) y.values[i] = kMissing;
  }
  cols.push_back(std::move(y));
  out.phase1 = Table(std::move(cols));
  return out;
}

}  // namespace twophase
