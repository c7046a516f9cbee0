#include "twophase/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "twophase/error.hpp"

namespace twophase {

Profile desk_profile() { return Profile{"desk", 100, 50, 200, 10, 1000, 10}; }
Profile paper_profile() { return Profile{"paper", 500, 100, 1000, 10, 1000, 10}; }

std::optional<Profile> find_profile(std::string_view name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  return std::nullopt;
}

RunConfig RunConfig::make(Scenario scenario, const Profile& profile) {
  RunConfig c;
  c.scenario = ScenarioConfig::make(scenario);
  c.population.n_continuous = c.scenario.n_continuous;
  c.population.n_binary = c.scenario.n_binary;
  c.replicates = profile.replicates;
  for (BartOptions* b : {&c.pipeline.adjustment.bart, &c.pipeline.imputation_bart}) {
    b->n_trees = profile.n_trees;
    b->n_keep = profile.n_keep;
    b->n_burn = profile.n_burn;
    b->thin = profile.thin;
  }
  c.pipeline.imputations = profile.imputations;
  return c;
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (c.replicates < 1) fail("replicates must be at least 1");
  if (c.methods.empty()) fail("at least one method is required");
  validate(c.scenario);
  validate(c.population);
  if (c.population.n_continuous != c.scenario.n_continuous ||
      c.population.n_binary != c.scenario.n_binary) {
    fail("population and scenario disagree on the covariate counts");
  }
  validate(c.pipeline.adjustment.bart);
  validate(c.pipeline.imputation_bart);
  const bool any_mi = std::any_of(c.methods.begin(), c.methods.end(), [](Method m) {
    return m == Method::MI_BART || m == Method::MI_rBART;
  });
  if (any_mi) {
    if (c.pipeline.imputations < 2) fail("MI methods need at least 2 imputations");
    if (c.pipeline.imputations > c.pipeline.imputation_bart.n_keep) {
      fail("imputations exceed the retained chain length");
    }
  }
  if (!(c.pipeline.level > 0 && c.pipeline.level < 1)) {
    fail("confidence level must lie in (0, 1)");
  }
}

ReplicateResult run_replicate(const RunConfig& config, int replicate_index) {
  const auto r = static_cast<std::uint64_t>(replicate_index);
  PopulationConfig pc = config.population;
  pc.seed = derive_seed(config.seed, "population", r);
  const Population pop = generate_population(pc);
  const TwoPhaseSample sample =
      draw_two_phase_sample(pop, config.scenario, derive_seed(config.seed, "sample", r));
  const StudyData data = StudyData::from_sample(sample);

  ReplicateResult res;
  res.index = replicate_index;
  res.truth = true_mean(pop);
  MethodPipeline pipeline(data, config.pipeline, derive_seed(config.seed, "methods", r));
  for (Method m : config.methods) res.outcomes.push_back(pipeline.run(m));
  return res;
}

MetricsRow metrics_row(std::span<const double> estimates,
                       std::span<const double> lower,
                       std::span<const double> upper,
                       std::span<const double> truths) {
  const std::size_t n = estimates.size();
  if (lower.size() != n || upper.size() != n || truths.size() != n) {
    throw Error(ErrorCode::ColumnMismatch, "metric inputs differ in length");
  }
  if (n == 0) {
    throw Error(ErrorCode::NoSuccessfulReplicates, "no successful replicates");
  }
  double bias = 0.0, sq = 0.0, covered = 0.0, width = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const double e = estimates[s] - truths[s];
    bias += e;
    sq += e * e;
    covered += (lower[s] <= truths[s] && truths[s] <= upper[s]) ? 1.0 : 0.0;
    width += upper[s] - lower[s];
  }
  const double dn = static_cast<double>(n);
  MetricsRow row;
  row.absolute_bias = 100.0 * std::abs(bias / dn);
  row.rmse = 100.0 * std::sqrt(sq / dn);
  row.coverage = 100.0 * covered / dn;
  row.width = 100.0 * width / dn;
  row.replicates = static_cast<int>(n);
  return row;
}

MetricsTable compute_metrics(Scenario scenario, std::span<const Method> methods,
                             std::vector<ReplicateResult> replicates) {
  std::sort(replicates.begin(), replicates.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  MetricsTable table;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    std::vector<double> est, lo, hi, truth;
    int failures = 0;
    for (const auto& rep : replicates) {
      if (k >= rep.outcomes.size()) {
        throw Error(ErrorCode::ColumnMismatch, "replicate lacks a method outcome");
      }
      const MethodOutcome& o = rep.outcomes[k];
      if (!o.ok) {
        ++failures;
        continue;
      }
      est.push_back(o.estimate.estimate);
      lo.push_back(o.interval.lower);
      hi.push_back(o.interval.upper);
      truth.push_back(rep.truth);
    }
    if (est.empty()) {
      throw Error(ErrorCode::NoSuccessfulReplicates,
                  std::string(method_name(methods[k])) + " failed in every replicate");
    }
    MetricsRow row = metrics_row(est, lo, hi, truth);
    row.scenario = scenario;
    row.method = methods[k];
    row.failures = failures;
    table.rows.push_back(row);
  }
  return table;
}

const MetricsRow* MetricsTable::find(Scenario s, Method m) const {
  for (const auto& r : rows) {
    if (r.scenario == s && r.method == m) return &r;
  }
  return nullptr;
}

Records MetricsTable::records() const {
  Records rec;
  rec.header = {"scenario", "method",   "absolute_bias", "rmse",        "coverage",
                "width",    "replicates", "failures",    "failure_rate"};
  for (const auto& r : rows) {
    rec.rows.push_back({std::string(scenario_name(r.scenario)),
                        std::string(method_name(r.method)), r.absolute_bias, r.rmse,
                        r.coverage, r.width, static_cast<std::int64_t>(r.replicates),
                        static_cast<std::int64_t>(r.failures), r.failure_rate()});
  }
  return rec;
}

SimulationResult run_simulation(const RunConfig& config,
                                std::span<const int> indices,
                                const ProgressFn& progress) {
  validate(config);
  const int total = static_cast<int>(indices.size());
  std::vector<ReplicateResult> results(indices.size());
  unsigned workers = config.threads ? config.threads : std::thread::hardware_concurrency();
  workers = std::clamp<unsigned>(workers, 1u, static_cast<unsigned>(std::max(total, 1)));

  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  int done = 0;
  std::exception_ptr failure;
  auto work = [&] {
    for (;;) {
      const int k = next.fetch_add(1);
      if (k >= total || stop) return;
      try {
        results[static_cast<std::size_t>(k)] =
            run_replicate(config, indices[static_cast<std::size_t>(k)]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        stop = true;
        return;
      }
      std::lock_guard lock(mu);
      ++done;
      if (progress) progress(done, total);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  SimulationResult out;
  out.metrics = compute_metrics(config.scenario.scenario, config.methods, results);
  out.replicates = std::move(results);
  return out;
}

SimulationResult run_simulation(const RunConfig& config, const ProgressFn& progress) {
  std::vector<int> indices(static_cast<std::size_t>(std::max(config.replicates, 0)));
  for (std::size_t k = 0; k < indices.size(); ++k) indices[k] = static_cast<int>(k);
  return run_simulation(config, indices, progress);
}

void write_results(const MetricsTable& table, const std::filesystem::path& path,
                   OutputFormat format) {
  write_results(table.records(), path, format);
}

Records replicate_records(std::span<const ReplicateResult> replicates) {
  Records rec;
  rec.header = {"replicate", "method", "ok", "estimate", "lower", "upper", "truth", "error"};
  for (const auto& rep : replicates) {
    for (const auto& o : rep.outcomes) {
      rec.rows.push_back({static_cast<std::int64_t>(rep.index),
                          std::string(method_name(o.method)),
                          static_cast<std::int64_t>(o.ok ? 1 : 0),
                          o.ok ? o.estimate.estimate : kMissing,
                          o.ok ? o.interval.lower : kMissing,
                          o.ok ? o.interval.upper : kMissing, rep.truth, o.error});
    }
  }
  return rec;
}

MethodOutcome analyze(const AnalyzeConfig& config) {
  if (config.method == Method::Benchmark) {
    throw Error(ErrorCode::InvalidConfig, "the benchmark needs a complete outcome");
  }
  const Table table = load_table(config.data, infer_schema(config.data));
  DesignRoles roles{{config.stratum, DesignRole::stratum},
                    {config.cluster, DesignRole::cluster},
                    {config.weight, DesignRole::weight},
                    {config.phase2, DesignRole::phase2_respondent},
                    {config.outcome, DesignRole::outcome}};
  if (!config.selected.empty()) roles.emplace(config.selected, DesignRole::phase2_selected);
  BoundDesign bound = bind_design(table, roles);

  StudyData data;
  data.auxiliary = std::move(bound.covariates);
  data.design = std::move(bound.frame);
  data.binary_outcome = bound.outcome->kind == ColumnKind::binary;
  data.outcome = bound.outcome->values;
  for (std::size_t i = 0; i < data.outcome.size(); ++i) {
    if (!data.design.phase2_respondent[i]) data.outcome[i] = kMissing;
  }
  data.phase2_selection_prob = config.phase2_selection_prob;

  MethodPipeline pipeline(data, config.pipeline, config.seed);
  MethodOutcome out = pipeline.run(config.method);
  if (!out.ok) throw Error(ErrorCode::InvalidConfig, out.error);
  return out;
}

Records outcome_records(const MethodOutcome& outcome) {
  Records rec;
  rec.header = {"estimate", "lower", "upper", "width"};
  rec.rows.push_back({outcome.estimate.estimate, outcome.interval.lower,
                      outcome.interval.upper, outcome.interval.width()});
  return rec;
}

}  // namespace twophase
