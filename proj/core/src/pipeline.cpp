#include "twophase/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "twophase/error.hpp"

namespace twophase {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Benchmark: return "Benchmark";
    case Method::WT_LGM: return "WT-LGM";
    case Method::WT_CHAID: return "WT-CHAID";
    case Method::WT_BART: return "WT-BART";
    case Method::WT_rBART: return "WT-rBART";
    case Method::MI_BART: return "MI-BART";
    case Method::MI_rBART: return "MI-rBART";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view text) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
  };
  const std::string key = lower(text);
  for (Method m : kAllMethods) {
    if (lower(method_name(m)) == key) return m;
  }
  return std::nullopt;
}

StudyData StudyData::from_sample(const TwoPhaseSample& sample) {
  StudyData d;
  const std::vector<std::string> y{"y"};
  d.auxiliary = sample.phase1.drop(y);
  d.design = sample.design;
  d.outcome = sample.phase1.column("y").values;
  d.complete_outcome = sample.complete_outcome;
  d.phase2_selection_prob = sample.phase2_selection_prob;
  return d;
}

MethodPipeline::MethodPipeline(const StudyData& data,
                               const PipelineOptions& options,
                               std::uint64_t seed)
    : data_(data), options_(options), seed_(seed) {
  const std::size_t n = data.design.size();
  if (data.auxiliary.rows() != n || data.outcome.size() != n) {
    throw Error(ErrorCode::ColumnMismatch,
                "covariates, outcome and design differ in length");
  }
  validate_design(data.design);
  for (std::size_t i = 0; i < n; ++i) {
    all_.push_back(i);
    if (data.design.phase2_selected[i]) selected_.push_back(i);
    if (data.design.phase2_respondent[i]) {
      respondents_.push_back(i);
      if (is_missing(data.outcome[i])) {
        throw Error(ErrorCode::MissingDesignValue,
                    "outcome is missing for a phase-II respondent",
                    static_cast<std::int64_t>(i + 1));
      }
    }
  }
}

PropensityFrame MethodPipeline::frame_for(std::span<const std::size_t> rows) const {
  PropensityFrame f;
  f.covariates = data_.auxiliary.subset_rows(rows);
  for (std::size_t i : rows) {
    f.phase1_weight.push_back(data_.design.weight[i]);
    f.stratum.push_back(data_.design.stratum_id[i]);
    f.cluster.push_back(data_.design.cluster_id[i]);
  }
  return f;
}

const AdjustmentResult& MethodPipeline::adjustment(AdjustmentMethod method) {
  auto it = cache_.find(method);
  if (it != cache_.end()) return it->second;
  std::vector<int> responded;
  for (std::size_t i : selected_) responded.push_back(data_.design.phase2_respondent[i]);
  Rng rng = make_rng(seed_, "adjustment", static_cast<std::uint64_t>(method));
  AdjustmentResult res = nonresponse_adjustment(method, frame_for(selected_),
                                                responded, options_.adjustment, rng);
  return cache_.emplace(method, std::move(res)).first->second;
}

MethodOutcome MethodPipeline::run(Method method) {
  MethodOutcome out;
  try {
    switch (method) {
      case Method::Benchmark: out = benchmark(); break;
      case Method::WT_LGM: out = weighted(AdjustmentMethod::LGM); break;
      case Method::WT_CHAID: out = weighted(AdjustmentMethod::CHAID); break;
      case Method::WT_BART: out = weighted(AdjustmentMethod::BART); break;
      case Method::WT_rBART: out = weighted(AdjustmentMethod::rBART); break;
      case Method::MI_BART: out = imputed(AdjustmentMethod::BART); break;
      case Method::MI_rBART: out = imputed(AdjustmentMethod::rBART); break;
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out = MethodOutcome{};
    out.error = e.what();
  }
  out.method = method;
  return out;
}

MethodOutcome MethodPipeline::benchmark() {
  if (!data_.complete_outcome) {
    throw Error(ErrorCode::InvalidConfig,
                "the benchmark needs the outcome for every phase-I unit");
  }
  const auto& d = data_.design;
  MethodOutcome out;
  out.estimate = design_estimate(*data_.complete_outcome, d.weight, d.stratum_id,
                                 d.cluster_id, options_.taylor);
  out.interval = ci_from(out.estimate, options_.level);
  return out;
}

MethodOutcome MethodPipeline::weighted(AdjustmentMethod method) {
  const AdjustmentResult& adj = adjustment(method);
  const DesignFrame d = data_.design.subset(respondents_);
  std::vector<double> y;
  for (std::size_t i : respondents_) y.push_back(data_.outcome[i]);
  const std::vector<double> w =
      subsample_weights(d.weight, data_.phase2_selection_prob, adj.adjustment);
  MethodOutcome out;
  out.estimate = design_estimate(y, w, d.stratum_id, d.cluster_id, options_.taylor);
  out.interval = ci_from(out.estimate, options_.level);
  return out;
}

MethodOutcome MethodPipeline::imputed(AdjustmentMethod method) {
  const bool grouped = method == AdjustmentMethod::rBART;
  const AdjustmentResult& adj = adjustment(method);
  const PropensityFrame everyone = frame_for(all_);
  const std::vector<double> a =
      adj.adjustments_for(everyone, options_.adjustment.clip);

  // Imputation covariates: auxiliaries, log phase-I weight, log adjustment,
  // stratum, and (BART only) cluster.
  std::vector<Column> cols = data_.auxiliary.columns();
  Column logw{"log_w1", ColumnKind::continuous, {}, {}};
  Column loga{"log_a", ColumnKind::continuous, {}, {}};
  for (std::size_t i = 0; i < all_.size(); ++i) {
    logw.values.push_back(std::log(data_.design.weight[i]));
    loga.values.push_back(std::log(a[i]));
  }
  cols.push_back(std::move(logw));
  cols.push_back(std::move(loga));
  cols.push_back(id_column("stratum", data_.design.stratum_id,
                           id_levels(data_.design.stratum_id)));
  if (!grouped) {
    cols.push_back(id_column("cluster", data_.design.cluster_id,
                             id_levels(data_.design.cluster_id)));
  }
  const Table features(std::move(cols));
  const Table train = features.subset_rows(respondents_);
  std::vector<std::int64_t> train_groups;
  for (std::size_t i : respondents_) train_groups.push_back(data_.design.cluster_id[i]);

  Rng fit_rng = make_rng(seed_, "imputation-model", static_cast<std::uint64_t>(method));
  PosteriorChain chain;
  if (data_.binary_outcome) {
    std::vector<int> r;
    for (std::size_t i : respondents_) r.push_back(static_cast<int>(data_.outcome[i]));
    chain = grouped ? fit_rbart_probit(train, r, train_groups, options_.imputation_bart, fit_rng)
                    : fit_bart_probit(train, r, options_.imputation_bart, fit_rng);
  } else {
    std::vector<double> y;
    for (std::size_t i : respondents_) y.push_back(data_.outcome[i]);
    chain = grouped ? fit_rbart(train, y, train_groups, options_.imputation_bart, fit_rng)
                    : fit_bart(train, y, options_.imputation_bart, fit_rng);
  }

  Rng draw_rng = make_rng(seed_, "imputation-draws", static_cast<std::uint64_t>(method));
  const auto completed =
      impute_datasets(chain, features, data_.outcome, options_.imputations, draw_rng,
                      grouped ? std::span<const std::int64_t>(data_.design.cluster_id)
                              : std::span<const std::int64_t>{});
  MIResult mi = mi_estimate_mean(completed, data_.design, options_.level,
                                 options_.taylor);
  MethodOutcome out;
  out.estimate = PointEstimate{mi.estimate, mi.total, mi.df};
  out.interval = mi.interval;
  out.mi = std::move(mi);
  return out;
}

}  // namespace twophase
