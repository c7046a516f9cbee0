#pragma once

#include <bitset>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "twophase/dataset.hpp"
#include "twophase/rng.hpp"

namespace twophase {

inline constexpr std::size_t kMaxCategoricalLevels = 256;

/// Dense column-major view of a covariate table as the sampler sees it:
/// continuous and binary columns as numbers, categorical columns as level
/// codes.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  static FeatureMatrix from_table(const Table& table);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return names_.size(); }
  double operator()(std::size_t row, std::size_t col) const {
    return data_[col * rows_ + row];
  }
  std::span<const double> column(std::size_t col) const {
    return {data_.data() + col * rows_, rows_};
  }
  bool categorical(std::size_t col) const { return categorical_[col] != 0; }
  std::size_t level_count(std::size_t col) const { return levels_[col].size(); }

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<ColumnKind>& kinds() const { return kinds_; }
  const std::vector<std::vector<std::string>>& levels() const { return levels_; }

 private:
  std::size_t rows_ = 0;
  std::vector<double> data_;
  std::vector<std::string> names_;
  std::vector<ColumnKind> kinds_;
  std::vector<std::uint8_t> categorical_;
  std::vector<std::vector<std::string>> levels_;
};

/// Internal node (two children and a split rule) or leaf (mu). Continuous
/// rules send x <= cut to the left; categorical rules send the levels set in
/// `left_levels` to the left.
struct TreeNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  int depth = 0;
  int var = -1;
  bool categorical = false;
  bool alive = true;
  double cut = 0.0;
  std::bitset<kMaxCategoricalLevels> left_levels;
  double mu = 0.0;

  bool is_leaf() const { return left < 0; }
};

/// Binary tree stored in a node arena; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes{TreeNode{}};

  int leaf_for(const FeatureMatrix& X, std::size_t row) const;
  double evaluate(const FeatureMatrix& X, std::size_t row) const {
    return nodes[static_cast<std::size_t>(leaf_for(X, row))].mu;
  }
  std::size_t leaf_count() const;
  std::size_t internal_count() const;
  /// Maximum depth over leaves; a lone root has depth 0.
  int depth() const;
};

struct MoveProbabilities {
  double grow = 0.25;
  double prune = 0.25;
  double change = 0.50;
};

/// Switches used by the sampler's correctness tests.
struct BartTestHooks {
  /// Treats every marginal likelihood as constant so the tree moves sample
  /// the prior.
  bool flat_likelihood = false;
  bool freeze_structure = false;
  bool freeze_leaves = false;
  /// Holds sigma (on the internal response scale) fixed instead of drawing it.
  std::optional<double> fixed_sigma;
};

struct BartOptions {
  int n_trees = 100;
  double alpha = 0.95;
  double beta = 2.0;
  double k = 2.0;
  double nu = 3.0;
  double q = 0.90;
  int n_burn = 1000;
  int n_keep = 200;
  int thin = 10;
  MoveProbabilities moves;
  int min_leaf_size = 5;
  /// Degrees of freedom of the random-intercept variance prior.
  double nu_tau = 3.0;
  BartTestHooks hooks;
};

void validate(const BartOptions& options);

/// Maps the response to the internal [-0.5, 0.5] range. Probit chains use a
/// unit-width range centred on the latent offset, i.e. a pure shift.
struct Scaling {
  double y_min = -0.5;
  double y_max = 0.5;

  double scale() const { return y_max - y_min; }
  double to_internal(double y) const { return (y - y_min) / scale() - 0.5; }
  double from_internal(double v) const { return y_min + (v + 0.5) * scale(); }
};

enum class ModelKind {
  continuous,
  probit,
  continuous_random_intercept,
  probit_random_intercept,
};

/// One retained posterior state. `sigma`, `random_intercepts` and `tau2` are
/// on the response scale; leaf values are on the internal scale.
struct TreeEnsembleDraw {
  std::vector<Tree> trees;
  double sigma = 1.0;
  std::map<std::int64_t, double> random_intercepts;
  double tau2 = 0.0;
};

struct PosteriorChain {
  ModelKind kind = ModelKind::continuous;
  Scaling scaling;
  std::vector<TreeEnsembleDraw> draws;
  std::vector<std::string> feature_names;
  std::vector<ColumnKind> feature_kinds;
  std::vector<std::vector<std::string>> feature_levels;
  /// Metropolis-Hastings acceptance counts over the whole run.
  std::size_t proposals = 0;
  std::size_t acceptances = 0;

  bool probit() const {
    return kind == ModelKind::probit ||
           kind == ModelKind::probit_random_intercept;
  }
  bool random_intercept() const {
    return kind == ModelKind::continuous_random_intercept ||
           kind == ModelKind::probit_random_intercept;
  }
  std::size_t size() const { return draws.size(); }
};

PosteriorChain fit_bart(const Table& X, std::span<const double> y,
                        const BartOptions& options, Rng& rng);

PosteriorChain fit_bart_probit(const Table& X, std::span<const int> r,
                               const BartOptions& options, Rng& rng);

/// Continuous BART plus a normal random intercept per group. The group ids
/// enter only through the intercepts, never as a tree covariate.
PosteriorChain fit_rbart(const Table& X, std::span<const double> y,
                         std::span<const std::int64_t> groups,
                         const BartOptions& options, Rng& rng);

PosteriorChain fit_rbart_probit(const Table& X, std::span<const int> r,
                                std::span<const std::int64_t> groups,
                                const BartOptions& options, Rng& rng);

struct PosteriorMean {};
inline constexpr PosteriorMean posterior_mean{};
using DrawSelection = std::variant<std::size_t, PosteriorMean>;

/// Per-draw prediction on the response scale: the conditional mean for
/// continuous chains and Phi(latent) for probit chains. Random-intercept
/// chains need `groups`; groups unseen in training get a zero intercept.
std::vector<double> predict(const PosteriorChain& chain, const Table& X_new,
                            DrawSelection which,
                            std::span<const std::int64_t> groups = {});
std::vector<double> predict(const PosteriorChain& chain,
                            const FeatureMatrix& X_new, DrawSelection which,
                            std::span<const std::int64_t> groups = {});

/// Builds a feature matrix for `X_new` after checking it against the
/// training columns.
FeatureMatrix chain_features(const PosteriorChain& chain, const Table& X_new);

/// Convergence dump: draw index, sigma, total leaf count, mean tree depth.
Records chain_records(const PosteriorChain& chain);

}  // namespace twophase
