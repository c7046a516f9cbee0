// twophase: simulation and real-data command-line driver.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef TWOPHASE_CLI11_SINGLE_HEADER
#include "CLI11.hpp"
#else
#include <CLI/CLI.hpp>
#endif

#include "twophase/error.hpp"
#include "twophase/simharness.hpp"

namespace {

using namespace twophase;

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Reads flat `key = value` lines into `--key=value` tokens.
std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::vector<std::string> tokens;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    tokens.push_back("--" + key + "=" + value);
  }
  return tokens;
}

// Splices config-file options in right after the subcommand name so that
// later command-line flags take precedence.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config") {
      if (k + 1 >= args.size()) throw ConfigError("--config needs a file");
      path = args[k + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(k),
                 args.begin() + static_cast<std::ptrdiff_t>(k + 2));
      break;
    }
    if (args[k].rfind("--config=", 0) == 0) {
      path = args[k].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(k));
      break;
    }
  }
  if (!path) return args;
  const auto tokens = config_tokens(*path);
  const auto sub = std::find_if(args.begin(), args.end(),
                                [](const std::string& a) { return a.empty() || a[0] != '-'; });
  const auto at = sub == args.end() ? args.begin() : sub + 1;
  args.insert(at, tokens.begin(), tokens.end());
  return args;
}

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if (item == "all") {
      out.assign(std::begin(kAllMethods), std::end(kAllMethods));
      continue;
    }
    const auto m = parse_method(item);
    if (!m) throw ConfigError("unknown method '" + item + "'");
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
  }
  if (out.empty()) throw ConfigError("no methods given");
  return out;
}

OutputFormat parse_format(const std::string& text) {
  const auto f = parse_output_format(text);
  if (!f) throw ConfigError("unknown format '" + text + "' (csv or json)");
  return *f;
}

struct BartOverrides {
  std::optional<int> trees, burn, keep, thin;

  void apply(BartOptions& b) const {
    if (trees) b.n_trees = *trees;
    if (burn) b.n_burn = *burn;
    if (keep) b.n_keep = *keep;
    if (thin) b.thin = *thin;
  }
  void add_to(CLI::App* app) {
    app->add_option("--trees", trees, "Trees per BART ensemble");
    app->add_option("--burn", burn, "Burn-in iterations per chain");
    app->add_option("--keep", keep, "Retained draws per chain");
    app->add_option("--thin", thin, "Thinning interval");
  }
};

void emit(const Records& rec, const std::string& out, OutputFormat format) {
  if (out.empty() || out == "-") {
    std::cout << format_records(rec, format);
  } else {
    write_results(rec, out, format);
  }
}

struct SimulateArgs {
  std::string scenario = "s1";
  std::string methods = "all";
  std::optional<int> replicates;
  std::optional<int> imputations;
  std::uint64_t seed = 1;
  std::string profile = "desk";
  std::string out;
  std::string format = "csv";
  std::string replicate_out;
  unsigned threads = 0;
  bool quiet = false;
  BartOverrides bart;
};

int run_simulate(const SimulateArgs& a) {
  const auto scenario = parse_scenario(a.scenario);
  if (!scenario) throw ConfigError("unknown scenario '" + a.scenario + "'");
  const auto profile = find_profile(a.profile);
  if (!profile) throw ConfigError("unknown profile '" + a.profile + "' (desk or paper)");
  const OutputFormat format = parse_format(a.format);

  RunConfig cfg = RunConfig::make(*scenario, *profile);
  cfg.methods = parse_methods(a.methods);
  if (a.replicates) cfg.replicates = *a.replicates;
  if (a.imputations) cfg.pipeline.imputations = *a.imputations;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  a.bart.apply(cfg.pipeline.adjustment.bart);
  a.bart.apply(cfg.pipeline.imputation_bart);
  validate(cfg);

  ProgressFn progress;
  if (!a.quiet) {
    progress = [](int done, int total) {
      std::cerr << "\rreplicate " << done << "/" << total << std::flush;
      if (done == total) std::cerr << "\n";
    };
  }
  const SimulationResult res = run_simulation(cfg, progress);
  if (!a.replicate_out.empty()) {
    write_results(replicate_records(res.replicates), a.replicate_out, format);
  }
  emit(res.metrics.records(), a.out, format);
  return 0;
}

struct AnalyzeArgs {
  AnalyzeConfig cfg;
  std::string method;
  std::optional<int> imputations;
  std::string out;
  std::string format = "csv";
  BartOverrides bart;
};

int run_analyze(AnalyzeArgs& a) {
  const auto method = parse_method(a.method);
  if (!method || *method == Method::Benchmark) {
    throw ConfigError("unknown method '" + a.method + "'");
  }
  const OutputFormat format = parse_format(a.format);
  a.cfg.method = *method;
  if (a.imputations) a.cfg.pipeline.imputations = *a.imputations;
  a.bart.apply(a.cfg.pipeline.adjustment.bart);
  a.bart.apply(a.cfg.pipeline.imputation_bart);
  validate(a.cfg.pipeline.adjustment.bart);
  validate(a.cfg.pipeline.imputation_bart);
  if (a.cfg.pipeline.imputations < 2 ||
      a.cfg.pipeline.imputations > a.cfg.pipeline.imputation_bart.n_keep) {
    throw ConfigError("imputations must lie in [2, keep]");
  }
  const MethodOutcome res = analyze(a.cfg);
  emit(outcome_records(res), a.out, format);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-phase survey estimation: weighting and tree-based multiple imputation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a replicated simulation study");
  simulate->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  simulate->add_option("--scenario", sim.scenario, "s1, s2, s3 or s4")->capture_default_str();
  simulate->add_option("--methods", sim.methods,
                       "Comma list of Benchmark, WT-LGM, WT-CHAID, WT-BART, WT-rBART, "
                       "MI-BART, MI-rBART, or all")
      ->capture_default_str();
  simulate->add_option("--replicates", sim.replicates, "Replicates (profile default)");
  simulate->add_option("--imputations", sim.imputations, "Imputations D (profile default)");
  simulate->add_option("--seed", sim.seed, "Base seed")->capture_default_str();
  simulate->add_option("--profile", sim.profile, "desk or paper")->capture_default_str();
  simulate->add_option("--out", sim.out, "Metrics output path (stdout when omitted)");
  simulate->add_option("--format", sim.format, "csv or json")->capture_default_str();
  simulate->add_option("--replicate-out", sim.replicate_out,
                       "Optional per-replicate results path");
  simulate->add_option("--threads", sim.threads, "Worker threads (0 = all cores)");
  simulate->add_flag("--quiet", sim.quiet, "Suppress progress output");
  sim.bart.add_to(simulate);

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Estimate a mean from a two-phase data file");
  analyze_cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  analyze_cmd->add_option("--data", an.cfg.data, "CSV file")->required();
  analyze_cmd->add_option("--stratum", an.cfg.stratum, "Stratum column")->required();
  analyze_cmd->add_option("--cluster", an.cfg.cluster, "Cluster column")->required();
  analyze_cmd->add_option("--weight", an.cfg.weight, "Phase-I weight column")->required();
  analyze_cmd->add_option("--phase2", an.cfg.phase2, "Phase-II respondent indicator column")
      ->required();
  analyze_cmd->add_option("--selected", an.cfg.selected,
                          "Phase-II selection indicator column (default: all units)");
  analyze_cmd->add_option("--outcome", an.cfg.outcome, "Outcome column")->required();
  analyze_cmd->add_option("--method", an.method,
                          "wt-lgm, wt-chaid, wt-bart, wt-rbart, mi-bart or mi-rbart")
      ->required();
  analyze_cmd->add_option("--imputations", an.imputations, "Imputations D (default 10)");
  analyze_cmd->add_option("--seed", an.cfg.seed, "Seed")->capture_default_str();
  analyze_cmd->add_option("--phase2-prob", an.cfg.phase2_selection_prob,
                          "Phase-II selection probability")
      ->capture_default_str();
  analyze_cmd->add_option("--out", an.out, "Output path (stdout when omitted)");
  analyze_cmd->add_option("--format", an.format, "csv or json")->capture_default_str();
  an.bart.add_to(analyze_cmd);

  app.add_subcommand("version", "Print the version");

  try {
    std::vector<std::string> args = expand_config({argv + 1, argv + argc});
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (app.got_subcommand("version")) {
      std::cout << "twophase " << TWOPHASE_VERSION << "\n";
      return 0;
    }
    if (app.got_subcommand(simulate)) return run_simulate(sim);
    if (app.got_subcommand(analyze_cmd)) return run_analyze(an);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidConfig ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
