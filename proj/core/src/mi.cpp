#include "twophase/mi.hpp"

#include <cmath>
#include <numeric>

#include "twophase/error.hpp"
#include "twophase/stats.hpp"

namespace twophase {

std::vector<CompletedDataset> impute_datasets(
    const PosteriorChain& chain, const Table& features,
    std::span<const double> observed, int D, Rng& rng,
    std::span<const std::int64_t> groups, const std::string& outcome_name) {
  if (D < 1) throw Error(ErrorCode::TooFewImputations, "need at least one imputation");
  if (static_cast<std::size_t>(D) > chain.size()) {
    throw Error(ErrorCode::ChainTooShort,
                "requested " + std::to_string(D) + " imputations from a chain of " +
                    std::to_string(chain.size()) + " draws");
  }
  if (observed.size() != features.rows()) {
    throw Error(ErrorCode::CovariateMismatch,
                "outcome length does not match the covariate rows");
  }
  if (chain.random_intercept() && groups.size() != features.rows()) {
    throw Error(ErrorCode::CovariateMismatch,
                "random-intercept imputation needs a cluster id per unit");
  }
  FeatureMatrix X;
  try {
    X = chain_features(chain, features);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ColumnMismatch) throw;
    throw Error(ErrorCode::CovariateMismatch, e.what());
  }

  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (is_missing(observed[i])) missing.push_back(i);
  }

  std::vector<CompletedDataset> out;
  out.reserve(static_cast<std::size_t>(D));
  const std::size_t first = chain.size() - static_cast<std::size_t>(D);
  for (std::size_t d = first; d < chain.size(); ++d) {
    std::vector<double> y(observed.begin(), observed.end());
    if (!missing.empty()) {
      const std::vector<double> mean = predict(chain, X, d, groups);
      const double sigma = chain.draws[d].sigma;
      for (std::size_t i : missing) {
        if (chain.probit()) {
          y[i] = stats::draw_uniform(rng) < mean[i] ? 1.0 : 0.0;
        } else {
          y[i] = mean[i] + sigma * stats::draw_normal(rng);
        }
      }
    }
    const ColumnKind kind =
        chain.probit() ? ColumnKind::binary : ColumnKind::continuous;
    std::vector<Column> cols = features.columns();
    std::erase_if(cols, [&](const Column& c) { return c.name == outcome_name; });
    cols.push_back(Column{outcome_name, kind, std::move(y), {}});
    out.push_back(CompletedDataset{Table(std::move(cols)), outcome_name, d});
  }
  return out;
}

MIResult rubin_combine(std::span<const double> estimates,
                       std::span<const double> variances, double level) {
  if (estimates.size() != variances.size()) {
    throw Error(ErrorCode::ColumnMismatch,
                "estimates and variances differ in length");
  }
  const std::size_t D = estimates.size();
  if (D < 2) throw Error(ErrorCode::TooFewImputations, "need at least 2 imputations");
  for (std::size_t d = 0; d < D; ++d) {
    if (!std::isfinite(estimates[d]) || !(variances[d] >= 0) ||
        !std::isfinite(variances[d])) {
      throw Error(ErrorCode::NonFiniteInput,
                  "estimates must be finite and variances non-negative",
                  static_cast<std::int64_t>(d + 1));
    }
  }
  MIResult res;
  res.D = static_cast<int>(D);
  res.estimates.assign(estimates.begin(), estimates.end());
  res.variances.assign(variances.begin(), variances.end());
  const double dd = static_cast<double>(D);
  res.estimate = std::accumulate(estimates.begin(), estimates.end(), 0.0) / dd;
  res.within = std::accumulate(variances.begin(), variances.end(), 0.0) / dd;
  double ss = 0.0;
  for (double q : estimates) ss += (q - res.estimate) * (q - res.estimate);
  res.between = ss / (dd - 1.0);
  res.total = res.within + (1.0 + 1.0 / dd) * res.between;
  if (res.between > 0) {
    const double r = 1.0 + dd / (dd + 1.0) * res.within / res.between;
    res.df = std::min((dd - 1.0) * r * r, kMaxRubinDf);
  } else {
    res.df = kMaxRubinDf;
  }
  res.interval = ci_from(PointEstimate{res.estimate, res.total, res.df}, level);
  return res;
}

MIResult mi_estimate_mean(const std::vector<CompletedDataset>& completed,
                          const DesignFrame& design, double level,
                          const TaylorOptions& taylor) {
  std::vector<double> est, var;
  for (const auto& c : completed) {
    if (c.data.rows() != design.size()) {
      throw Error(ErrorCode::ColumnMismatch,
                  "design does not cover every phase-I unit");
    }
    const auto& y = c.outcome();
    est.push_back(weighted_mean(y, design.weight));
    var.push_back(taylor_variance(y, design.weight, design.stratum_id,
                                  design.cluster_id, taylor));
  }
  return rubin_combine(est, var, level);
}

Records mi_records(const MIResult& result) {
  Records rec;
  rec.header = {"estimate", "lower", "upper", "width"};
  rec.rows.push_back({result.estimate, result.interval.lower,
                      result.interval.upper, result.interval.width()});
  return rec;
}

void write_results(const MIResult& result, const std::filesystem::path& path,
                   OutputFormat format) {
  write_results(mi_records(result), path, format);
}

}  // namespace twophase
