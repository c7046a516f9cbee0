#include "twophase/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "twophase/error.hpp"

namespace twophase {

std::string_view adjustment_method_name(AdjustmentMethod m) {
  switch (m) {
    case AdjustmentMethod::LGM: return "LGM";
    case AdjustmentMethod::CHAID: return "CHAID";
    case AdjustmentMethod::BART: return "BART";
    case AdjustmentMethod::rBART: return "rBART";
  }
  return "?";
}

PropensityFrame PropensityFrame::subset(std::span<const std::size_t> rows) const {
  PropensityFrame out;
  out.covariates = covariates.subset_rows(rows);
  for (std::size_t i : rows) {
    out.phase1_weight.push_back(phase1_weight.at(i));
    out.stratum.push_back(stratum.at(i));
    out.cluster.push_back(cluster.at(i));
  }
  return out;
}

std::vector<std::string> id_levels(std::span<const std::int64_t> ids) {
  const std::set<std::int64_t> distinct(ids.begin(), ids.end());
  std::vector<std::string> levels;
  for (auto id : distinct) levels.push_back(std::to_string(id));
  levels.push_back("other");
  return levels;
}

Column id_column(std::string name, std::span<const std::int64_t> ids,
                 const std::vector<std::string>& levels) {
  Column c{std::move(name), ColumnKind::categorical, {}, levels};
  std::map<std::string, double> code;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    code.emplace(levels[l], static_cast<double>(l));
  }
  const double other = static_cast<double>(levels.size() - 1);
  c.values.reserve(ids.size());
  for (auto id : ids) {
    const auto it = code.find(std::to_string(id));
    c.values.push_back(it == code.end() ? other : it->second);
  }
  return c;
}

double clipped_adjustment(double propensity, double clip) {
  return 1.0 / std::clamp(propensity, clip, 1.0);
}

std::vector<double> AdjustmentResult::adjustments_for(
    const PropensityFrame& units, double clip) const {
  std::vector<double> p = model->predict(units);
  for (double& v : p) v = clipped_adjustment(v, clip);
  return p;
}

namespace {

void check_frame(const PropensityFrame& f) {
  const std::size_t n = f.size();
  if (f.phase1_weight.size() != n || f.stratum.size() != n ||
      f.cluster.size() != n) {
    throw Error(ErrorCode::ColumnMismatch,
                "design vectors do not match the covariate rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(f.phase1_weight[i] > 0)) {
      throw Error(ErrorCode::NonPositiveWeight, "phase-I weight must be positive",
                  static_cast<std::int64_t>(i + 1));
    }
  }
}

class ConstantModel final : public PropensityModel {
 public:
  explicit ConstantModel(double p) : p_(p) {}
  std::vector<double> predict(const PropensityFrame& units) const override {
    return std::vector<double>(units.size(), p_);
  }

 private:
  double p_;
};

class LogisticModel final : public PropensityModel {
 public:
  LogisticModel(std::vector<std::string> cols, Eigen::VectorXd beta)
      : cols_(std::move(cols)), beta_(std::move(beta)) {}
  std::vector<double> predict(const PropensityFrame& units) const override {
    return logistic_probabilities(
        design_matrix(units.covariates.select(cols_), true), beta_);
  }

 private:
  std::vector<std::string> cols_;
  Eigen::VectorXd beta_;
};

class CellModel final : public PropensityModel {
 public:
  CellModel(std::vector<std::string> cols,
            std::vector<std::vector<double>> breaks, ChaidTree tree)
      : cols_(std::move(cols)), breaks_(std::move(breaks)), tree_(std::move(tree)) {}
  std::vector<double> predict(const PropensityFrame& units) const override {
    auto breaks = breaks_;
    const Table X = discretize(units.covariates.select(cols_), &breaks, true);
    std::vector<double> p(units.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = tree_.partition().response_rate(
          static_cast<std::size_t>(tree_.cell_for(X, i)));
    }
    return p;
  }

 private:
  std::vector<std::string> cols_;
  std::vector<std::vector<double>> breaks_;
  ChaidTree tree_;
};

Table tree_features(const PropensityFrame& f,
                    const std::vector<std::string>& stratum_levels,
                    const std::vector<std::string>* cluster_levels) {
  std::vector<Column> cols = f.covariates.columns();
  Column logw{"log_w1", ColumnKind::continuous, {}, {}};
  for (double w : f.phase1_weight) logw.values.push_back(std::log(w));
  cols.push_back(std::move(logw));
  cols.push_back(id_column("stratum", f.stratum, stratum_levels));
  if (cluster_levels) cols.push_back(id_column("cluster", f.cluster, *cluster_levels));
  return Table(std::move(cols));
}

class BartPropensityModel final : public PropensityModel {
 public:
  BartPropensityModel(PosteriorChain chain, std::vector<std::string> strata,
                      std::vector<std::string> clusters, bool grouped)
      : chain_(std::move(chain)),
        strata_(std::move(strata)),
        clusters_(std::move(clusters)),
        grouped_(grouped) {}
  std::vector<double> predict(const PropensityFrame& units) const override {
    const Table X = tree_features(units, strata_, grouped_ ? nullptr : &clusters_);
    return twophase::predict(chain_, X, posterior_mean,
                             grouped_ ? std::span<const std::int64_t>(units.cluster)
                                      : std::span<const std::int64_t>{});
  }

 private:
  PosteriorChain chain_;
  std::vector<std::string> strata_;
  std::vector<std::string> clusters_;
  bool grouped_;
};

std::vector<std::string> screened_columns(const PropensityFrame& selected,
                                          std::span<const int> respondent,
                                          const AdjustmentOptions& options,
                                          Rng& rng) {
  if (selected.covariates.cols() > options.screen_above) {
    return lasso_screen(selected.covariates, respondent, options.lasso_folds, rng);
  }
  return selected.covariates.names();
}

}  // namespace

AdjustmentResult nonresponse_adjustment(AdjustmentMethod method,
                                        const PropensityFrame& selected,
                                        std::span<const int> respondent,
                                        const AdjustmentOptions& options,
                                        Rng& rng) {
  check_frame(selected);
  const std::size_t n = selected.size();
  if (respondent.size() != n) {
    throw Error(ErrorCode::ColumnMismatch,
                "response indicator length does not match the selected units");
  }
  if (n == 0) throw Error(ErrorCode::EmptyInput, "no phase-II-selected units");
  if (!(options.clip > 0 && options.clip <= 1)) {
    throw Error(ErrorCode::InvalidConfig, "clip must lie in (0, 1]");
  }
  const auto ones = static_cast<std::size_t>(
      std::count(respondent.begin(), respondent.end(), 1));
  if (ones + static_cast<std::size_t>(std::count(respondent.begin(),
                                                 respondent.end(), 0)) != n) {
    throw Error(ErrorCode::NonFiniteInput, "response indicator must be 0/1");
  }
  if (ones == 0) {
    throw Error(ErrorCode::SingleClass, "no phase-II respondents");
  }
  const double overall = static_cast<double>(ones) / static_cast<double>(n);

  AdjustmentResult res;
  res.method = method;
  if (ones == n) {
    res.model = std::make_shared<ConstantModel>(1.0);
    res.covariates_used = selected.covariates.names();
  } else {
    switch (method) {
      case AdjustmentMethod::LGM: {
        res.covariates_used = screened_columns(selected, respondent, options, rng);
        if (res.covariates_used.empty()) {
          res.model = std::make_shared<ConstantModel>(overall);
          break;
        }
        const LogisticFit fit = fit_logistic(
            selected.covariates.select(res.covariates_used), respondent);
        res.model = std::make_shared<LogisticModel>(res.covariates_used,
                                                    fit.coefficients);
        break;
      }
      case AdjustmentMethod::CHAID: {
        res.covariates_used = screened_columns(selected, respondent, options, rng);
        if (res.covariates_used.empty()) {
          res.model = std::make_shared<ConstantModel>(overall);
          break;
        }
        std::vector<std::vector<double>> breaks;
        const Table X =
            discretize(selected.covariates.select(res.covariates_used), &breaks);
        res.model = std::make_shared<CellModel>(
            res.covariates_used, std::move(breaks),
            grow_chaid(X, respondent, options.chaid));
        break;
      }
      case AdjustmentMethod::BART:
      case AdjustmentMethod::rBART: {
        const bool grouped = method == AdjustmentMethod::rBART;
        auto strata = id_levels(selected.stratum);
        auto clusters = id_levels(selected.cluster);
        const Table X = tree_features(selected, strata, grouped ? nullptr : &clusters);
        res.covariates_used = X.names();
        PosteriorChain chain =
            grouped ? fit_rbart_probit(X, respondent, selected.cluster, options.bart, rng)
                    : fit_bart_probit(X, respondent, options.bart, rng);
        res.model = std::make_shared<BartPropensityModel>(
            std::move(chain), std::move(strata), std::move(clusters), grouped);
        break;
      }
    }
  }

  res.propensity = res.model->predict(selected);
  for (std::size_t i = 0; i < n; ++i) {
    if (respondent[i]) {
      res.adjustment.push_back(clipped_adjustment(res.propensity[i], options.clip));
    }
  }
  return res;
}

std::vector<double> subsample_weights(std::span<const double> phase1_weight,
                                      double phase2_selection_prob,
                                      std::span<const double> adjustment) {
  if (phase1_weight.size() != adjustment.size()) {
    throw Error(ErrorCode::ColumnMismatch,
                "weights and adjustments differ in length");
  }
  if (!(phase2_selection_prob > 0 && phase2_selection_prob <= 1)) {
    throw Error(ErrorCode::NonPositiveInput,
                "phase-II selection probability must lie in (0, 1]");
  }
  std::vector<double> w(phase1_weight.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(phase1_weight[i] > 0) || !(adjustment[i] > 0)) {
      throw Error(ErrorCode::NonPositiveInput,
                  "weights and adjustments must be positive",
                  static_cast<std::int64_t>(i + 1));
    }
    w[i] = phase1_weight[i] / phase2_selection_prob * adjustment[i];
  }
  return w;
}

Records adjustment_records(const AdjustmentResult& result,
                           std::span<const int> respondent, double clip) {
  if (respondent.size() != result.propensity.size()) {
    throw Error(ErrorCode::ColumnMismatch,
                "response indicator does not match the fitted units");
  }
  Records rec;
  rec.header = {"unit", "propensity", "adjustment"};
  for (std::size_t i = 0; i < respondent.size(); ++i) {
    const double a = respondent[i]
                         ? clipped_adjustment(result.propensity[i], clip)
                         : kMissing;
    rec.rows.push_back({static_cast<std::int64_t>(i + 1), result.propensity[i], a});
  }
  return rec;
}

}  // namespace twophase
