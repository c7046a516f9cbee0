#include "twophase/bart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "twophase/error.hpp"
#include "twophase/stats.hpp"

namespace twophase {

// ---------------------------------------------------------------------------
// Features and trees

FeatureMatrix FeatureMatrix::from_table(const Table& table) {
  FeatureMatrix fm;
  fm.rows_ = table.rows();
  fm.data_.resize(table.rows() * table.cols());
  for (std::size_t j = 0; j < table.cols(); ++j) {
    const Column& col = table.column(j);
    fm.names_.push_back(col.name);
    fm.kinds_.push_back(col.kind);
    const bool cat = col.kind == ColumnKind::categorical;
    fm.categorical_.push_back(cat ? 1 : 0);
    fm.levels_.push_back(cat ? col.levels : std::vector<std::string>{});
    if (cat && col.levels.size() > kMaxCategoricalLevels) {
      throw Error(ErrorCode::TooManyLevels,
                  "categorical column " + col.name + " has more than " +
                      std::to_string(kMaxCategoricalLevels) + " levels");
    }
    for (std::size_t i = 0; i < fm.rows_; ++i) {
      const double v = col.values[i];
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteInput,
                    "covariate " + col.name + " is missing or non-finite",
                    static_cast<std::int64_t>(i + 1));
      }
      fm.data_[j * fm.rows_ + i] = v;
    }
  }
  return fm;
}

int Tree::leaf_for(const FeatureMatrix& X, std::size_t row) const {
  int id = 0;
  for (;;) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(id)];
    if (nd.is_leaf()) return id;
    const double v = X(row, static_cast<std::size_t>(nd.var));
    const bool go_left = nd.categorical
                             ? nd.left_levels.test(static_cast<std::size_t>(v))
                             : v <= nd.cut;
    id = go_left ? nd.left : nd.right;
  }
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(
      nodes.begin(), nodes.end(),
      [](const TreeNode& n) { return n.alive && n.is_leaf(); }));
}

std::size_t Tree::internal_count() const {
  return static_cast<std::size_t>(std::count_if(
      nodes.begin(), nodes.end(),
      [](const TreeNode& n) { return n.alive && !n.is_leaf(); }));
}

int Tree::depth() const {
  int d = 0;
  for (const auto& n : nodes) {
    if (n.alive && n.is_leaf()) d = std::max(d, n.depth);
  }
  return d;
}

void validate(const BartOptions& o) {
  auto fail = [](const std::string& m) {
    throw Error(ErrorCode::InvalidConfig, m);
  };
  if (o.n_trees < 1) fail("n_trees must be at least 1");
  if (!(o.alpha > 0 && o.alpha < 1)) fail("alpha must lie in (0, 1)");
  if (!(o.beta >= 0)) fail("beta must be non-negative");
  if (!(o.k > 0) || !(o.nu > 0) || !(o.nu_tau > 0)) {
    fail("k, nu and nu_tau must be positive");
  }
  if (!(o.q > 0 && o.q < 1)) fail("q must lie in (0, 1)");
  if (o.n_burn < 0 || o.n_keep < 1 || o.thin < 1) {
    fail("need n_burn >= 0, n_keep >= 1, thin >= 1");
  }
  if (o.min_leaf_size < 1) fail("min_leaf_size must be at least 1");
  const auto& m = o.moves;
  if (!(m.grow > 0) || !(m.prune > 0) || m.change < 0 ||
      std::abs(m.grow + m.prune + m.change - 1.0) > 1e-9) {
    fail("move probabilities must be positive (change may be 0) and sum to 1");
  }
}

// ---------------------------------------------------------------------------
// Backfitting sampler

namespace {

struct LeafStats {
  int n = 0;
  double sum = 0.0;
  LeafStats operator+(const LeafStats& o) const { return {n + o.n, sum + o.sum}; }
};

struct SplitRule {
  int var = -1;
  bool categorical = false;
  double cut = 0.0;
  std::bitset<kMaxCategoricalLevels> left_levels;
};

struct GroupData {
  std::vector<int> group_of;            // per unit, index into ids
  std::vector<std::int64_t> ids;        // sorted distinct ids
  std::vector<int> counts;
};

GroupData index_groups(std::span<const std::int64_t> groups) {
  GroupData g;
  std::map<std::int64_t, int> index;
  for (auto id : groups) index.emplace(id, 0);
  int k = 0;
  for (auto& [id, idx] : index) {
    idx = k++;
    g.ids.push_back(id);
  }
  g.counts.assign(g.ids.size(), 0);
  g.group_of.reserve(groups.size());
  for (auto id : groups) {
    const int idx = index.at(id);
    g.group_of.push_back(idx);
    ++g.counts[static_cast<std::size_t>(idx)];
  }
  return g;
}

class BackfitSampler {
 public:
  BackfitSampler(const FeatureMatrix& X, const BartOptions& opt, Rng& rng,
                 ModelKind kind, Scaling scaling)
      : X_(X),
        opt_(opt),
        rng_(rng),
        kind_(kind),
        scaling_(scaling),
        n_(X.rows()),
        p_(X.cols()) {}

  void set_continuous_target(std::vector<double> y_internal) {
    y_ = std::move(y_internal);
  }
  void set_probit_response(std::span<const int> r, double offset) {
    response_.assign(r.begin(), r.end());
    probit_offset_ = offset;
    y_.assign(n_, 0.0);
  }
  void set_groups(GroupData groups, double lambda_tau) {
    groups_ = std::move(groups);
    delta_.assign(groups_.ids.size(), 0.0);
    lambda_tau_ = lambda_tau;
    tau2_ = lambda_tau;
  }

  PosteriorChain run();

 private:
  bool probit() const {
    return kind_ == ModelKind::probit ||
           kind_ == ModelKind::probit_random_intercept;
  }
  bool random_intercept() const { return !groups_.ids.empty(); }

  int* leaf_of(std::size_t b) { return leaf_of_.data() + b * n_; }

  double split_prob(int depth) const {
    return opt_.alpha * std::pow(1.0 + depth, -opt_.beta);
  }

  double log_marginal(const LeafStats& s) const {
    if (opt_.hooks.flat_likelihood || s.n == 0) return 0.0;
    const double denom = sigma2_ + s.n * sigma_mu2_;
    return 0.5 * std::log(sigma2_ / denom) +
           0.5 * sigma_mu2_ * s.sum * s.sum / (sigma2_ * denom);
  }

  double uniform() { return stats::draw_uniform(rng_); }
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

  void list_nodes(const Tree& t) {
    leaves_.clear();
    nogs_.clear();
    for (std::size_t id = 0; id < t.nodes.size(); ++id) {
      const TreeNode& nd = t.nodes[id];
      if (!nd.alive) continue;
      if (nd.is_leaf()) {
        leaves_.push_back(static_cast<int>(id));
      } else if (t.nodes[static_cast<std::size_t>(nd.left)].is_leaf() &&
                 t.nodes[static_cast<std::size_t>(nd.right)].is_leaf()) {
        nogs_.push_back(static_cast<int>(id));
      }
    }
  }

  static bool is_nog(const Tree& t, int id) {
    const TreeNode& nd = t.nodes[static_cast<std::size_t>(id)];
    return !nd.is_leaf() && t.nodes[static_cast<std::size_t>(nd.left)].is_leaf() &&
           t.nodes[static_cast<std::size_t>(nd.right)].is_leaf();
  }

  // Units currently in leaf `a` (or in `a` or `b`).
  void collect_units(std::size_t tree, int a, int b = -1) {
    units_.clear();
    const int* lo = leaf_of(tree);
    for (std::size_t i = 0; i < n_; ++i) {
      if (lo[i] == a || lo[i] == b) units_.push_back(i);
    }
  }

  bool goes_left(const SplitRule& rule, std::size_t i) const {
    const double v = X_(i, static_cast<std::size_t>(rule.var));
    return rule.categorical ? rule.left_levels.test(static_cast<std::size_t>(v))
                            : v <= rule.cut;
  }

  // Draws a variable uniformly and a rule uniformly from the values observed
  // in the node. Returns false when the variable cannot split the node.
  bool draw_rule(SplitRule& rule) {
    rule.var = static_cast<int>(uniform_index(p_));
    const auto col = X_.column(static_cast<std::size_t>(rule.var));
    if (X_.categorical(static_cast<std::size_t>(rule.var))) {
      rule.categorical = true;
      std::bitset<kMaxCategoricalLevels> present;
      for (std::size_t i : units_) present.set(static_cast<std::size_t>(col[i]));
      const std::size_t k = present.count();
      if (k < 2) return false;
      present_levels_.clear();
      for (std::size_t l = 0; l < kMaxCategoricalLevels && present_levels_.size() < k; ++l) {
        if (present.test(l)) present_levels_.push_back(l);
      }
      std::size_t chosen = 0;
      do {
        rule.left_levels.reset();
        chosen = 0;
        for (std::size_t l : present_levels_) {
          if (uniform() < 0.5) {
            rule.left_levels.set(l);
            ++chosen;
          }
        }
      } while (chosen == 0 || chosen == k);
      return true;
    }
    rule.categorical = false;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i : units_) mx = std::max(mx, col[i]);
    std::size_t below = 0;
    for (std::size_t i : units_) below += col[i] < mx;
    if (below == 0) return false;
    std::size_t target = uniform_index(below);
    for (std::size_t i : units_) {
      if (col[i] < mx && target-- == 0) {
        rule.cut = col[i];
        break;
      }
    }
    return true;
  }

  // Residual of unit i with tree b's own contribution added back.
  double partial(std::size_t b, std::size_t i) {
    return resid_[i] +
           trees_[b].nodes[static_cast<std::size_t>(leaf_of(b)[i])].mu;
  }

  void split_stats(std::size_t b, const SplitRule& rule, LeafStats& left,
                   LeafStats& right) {
    left = {};
    right = {};
    for (std::size_t i : units_) {
      LeafStats& s = goes_left(rule, i) ? left : right;
      ++s.n;
      s.sum += partial(b, i);
    }
  }

  // Stats of the units in leaf `a` versus the rest of `units_`.
  void leaf_stats(std::size_t b, int a, LeafStats& sa, LeafStats& sb) {
    sa = {};
    sb = {};
    const int* lo = leaf_of(b);
    for (std::size_t i : units_) {
      LeafStats& s = lo[i] == a ? sa : sb;
      ++s.n;
      s.sum += partial(b, i);
    }
  }

  // Moves units to new leaves, keeping the residual consistent.
  template <typename Target>
  void reassign(std::size_t b, Target target) {
    Tree& t = trees_[b];
    int* lo = leaf_of(b);
    for (std::size_t i : units_) {
      const int to = target(i);
      resid_[i] += t.nodes[static_cast<std::size_t>(lo[i])].mu -
                   t.nodes[static_cast<std::size_t>(to)].mu;
      lo[i] = to;
    }
  }

  bool accept(double log_ratio) {
    ++proposals_;
    if (std::log(uniform()) < log_ratio) {
      ++acceptances_;
      return true;
    }
    return false;
  }

  int new_node(Tree& t) {
    for (std::size_t id = 1; id < t.nodes.size(); ++id) {
      if (!t.nodes[id].alive) {
        t.nodes[id] = TreeNode{};
        return static_cast<int>(id);
      }
    }
    t.nodes.emplace_back();
    return static_cast<int>(t.nodes.size() - 1);
  }

  void apply_rule(TreeNode& nd, const SplitRule& rule) {
    nd.var = rule.var;
    nd.categorical = rule.categorical;
    nd.cut = rule.cut;
    nd.left_levels = rule.left_levels;
  }

  bool grow(std::size_t b) {
    Tree& t = trees_[b];
    list_nodes(t);
    const std::size_t n_leaves = leaves_.size();
    const int eta = leaves_[uniform_index(n_leaves)];
    collect_units(b, eta);
    const auto min_leaf = static_cast<std::size_t>(opt_.min_leaf_size);
    if (units_.size() < 2 * min_leaf) return false;
    SplitRule rule;
    if (!draw_rule(rule)) return false;
    LeafStats left, right;
    split_stats(b, rule, left, right);
    if (left.n < opt_.min_leaf_size || right.n < opt_.min_leaf_size) {
      return false;
    }

    const int depth = t.nodes[static_cast<std::size_t>(eta)].depth;
    const double ps = split_prob(depth);
    const double ps_child = split_prob(depth + 1);
    const int parent = t.nodes[static_cast<std::size_t>(eta)].parent;
    const std::size_t nogs_after =
        nogs_.size() + 1 - ((parent >= 0 && is_nog(t, parent)) ? 1 : 0);
    const double p_grow = n_leaves == 1 ? 1.0 : opt_.moves.grow;

    const double log_ratio =
        std::log(ps) + 2.0 * std::log1p(-ps_child) - std::log1p(-ps) +
        std::log(opt_.moves.prune) - std::log(static_cast<double>(nogs_after)) -
        std::log(p_grow) + std::log(static_cast<double>(n_leaves)) +
        log_marginal(left) + log_marginal(right) -
        log_marginal(left + right);
    if (!accept(log_ratio)) return false;

    const int l = new_node(t);
    const int r = new_node(t);
    TreeNode& nd = t.nodes[static_cast<std::size_t>(eta)];
    apply_rule(nd, rule);
    nd.left = l;
    nd.right = r;
    for (int c : {l, r}) {
      TreeNode& child = t.nodes[static_cast<std::size_t>(c)];
      child.parent = eta;
      child.depth = depth + 1;
      child.mu = nd.mu;
    }
    int* lo = leaf_of(b);
    for (std::size_t i : units_) lo[i] = goes_left(rule, i) ? l : r;
    return true;
  }

  bool prune(std::size_t b) {
    Tree& t = trees_[b];
    list_nodes(t);
    if (nogs_.empty()) return false;
    const int eta = nogs_[uniform_index(nogs_.size())];
    TreeNode& nd = t.nodes[static_cast<std::size_t>(eta)];
    const int l = nd.left;
    const int r = nd.right;
    collect_units(b, l, r);
    LeafStats sl, sr;
    leaf_stats(b, l, sl, sr);

    const double ps = split_prob(nd.depth);
    const double ps_child = split_prob(nd.depth + 1);
    const std::size_t leaves_after = leaves_.size() - 1;
    const double p_grow_after = eta == 0 ? 1.0 : opt_.moves.grow;
    const double log_ratio =
        std::log1p(-ps) - std::log(ps) - 2.0 * std::log1p(-ps_child) +
        std::log(p_grow_after) - std::log(static_cast<double>(leaves_after)) -
        std::log(opt_.moves.prune) +
        std::log(static_cast<double>(nogs_.size())) + log_marginal(sl + sr) -
        log_marginal(sl) - log_marginal(sr);
    if (!accept(log_ratio)) return false;

    nd.mu = (sl.n * t.nodes[static_cast<std::size_t>(l)].mu +
             sr.n * t.nodes[static_cast<std::size_t>(r)].mu) /
            (sl.n + sr.n);
    reassign(b, [eta](std::size_t) { return eta; });
    t.nodes[static_cast<std::size_t>(l)].alive = false;
    t.nodes[static_cast<std::size_t>(r)].alive = false;
    nd.left = nd.right = -1;
    nd.var = -1;
    return true;
  }

  bool change(std::size_t b) {
    Tree& t = trees_[b];
    list_nodes(t);
    if (nogs_.empty()) return false;
    const int eta = nogs_[uniform_index(nogs_.size())];
    const int l = t.nodes[static_cast<std::size_t>(eta)].left;
    const int r = t.nodes[static_cast<std::size_t>(eta)].right;
    collect_units(b, l, r);
    LeafStats old_l, old_r;
    leaf_stats(b, l, old_l, old_r);
    SplitRule rule;
    if (!draw_rule(rule)) return false;
    LeafStats new_l, new_r;
    split_stats(b, rule, new_l, new_r);
    if (new_l.n < opt_.min_leaf_size || new_r.n < opt_.min_leaf_size) {
      return false;
    }
    const double log_ratio = log_marginal(new_l) + log_marginal(new_r) -
                             log_marginal(old_l) - log_marginal(old_r);
    if (!accept(log_ratio)) return false;
    apply_rule(t.nodes[static_cast<std::size_t>(eta)], rule);
    reassign(b, [&](std::size_t i) { return goes_left(rule, i) ? l : r; });
    return true;
  }

  void draw_leaves(std::size_t b) {
    Tree& t = trees_[b];
    node_stats_.assign(t.nodes.size(), LeafStats{});
    node_shift_.assign(t.nodes.size(), 0.0);
    int* lo = leaf_of(b);
    for (std::size_t i = 0; i < n_; ++i) {
      LeafStats& s = node_stats_[static_cast<std::size_t>(lo[i])];
      ++s.n;
      s.sum += resid_[i];
    }
    for (std::size_t id = 0; id < t.nodes.size(); ++id) {
      TreeNode& nd = t.nodes[id];
      if (!nd.alive || !nd.is_leaf()) continue;
      const LeafStats& s = node_stats_[id];
      const double sum = s.sum + s.n * nd.mu;
      const double var = 1.0 / (s.n / sigma2_ + 1.0 / sigma_mu2_);
      const double fresh =
          var * sum / sigma2_ + std::sqrt(var) * stats::draw_normal(rng_);
      node_shift_[id] = fresh - nd.mu;
      nd.mu = fresh;
    }
    for (std::size_t i = 0; i < n_; ++i) {
      resid_[i] -= node_shift_[static_cast<std::size_t>(lo[i])];
    }
  }

  void update_tree(std::size_t b) {
    if (!opt_.hooks.freeze_structure) {
      const bool root_only = trees_[b].nodes[0].is_leaf();
      const double u = uniform();
      if (root_only || u < opt_.moves.grow) {
        grow(b);
      } else if (u < opt_.moves.grow + opt_.moves.prune) {
        prune(b);
      } else {
        change(b);
      }
    }
    if (!opt_.hooks.freeze_leaves) draw_leaves(b);
  }

  void recompute_fit() {
    std::fill(fit_.begin(), fit_.end(), 0.0);
    for (std::size_t b = 0; b < trees_.size(); ++b) {
      const int* lo = leaf_of(b);
      const Tree& t = trees_[b];
      for (std::size_t i = 0; i < n_; ++i) {
        fit_[i] += t.nodes[static_cast<std::size_t>(lo[i])].mu;
      }
    }
    if (random_intercept()) {
      for (std::size_t i = 0; i < n_; ++i) {
        fit_[i] += delta_[static_cast<std::size_t>(groups_.group_of[i])];
      }
    }
    for (std::size_t i = 0; i < n_; ++i) resid_[i] = y_[i] - fit_[i];
  }

  void draw_latent() {
    const double bound = -probit_offset_;
    for (std::size_t i = 0; i < n_; ++i) {
      const double fit = y_[i] - resid_[i];
      y_[i] = response_[i]
                  ? stats::draw_truncated_normal_above(fit, bound, rng_)
                  : stats::draw_truncated_normal_below(fit, bound, rng_);
      resid_[i] = y_[i] - fit;
    }
  }

  void draw_intercepts() {
    const std::size_t J = delta_.size();
    std::vector<double> sums(J, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      const auto g = static_cast<std::size_t>(groups_.group_of[i]);
      sums[g] += resid_[i] + delta_[g];
    }
    std::vector<double> shift(J);
    double ss = 0.0;
    for (std::size_t g = 0; g < J; ++g) {
      const double prec = groups_.counts[g] / sigma2_ + 1.0 / tau2_;
      const double mean = sums[g] / sigma2_ / prec;
      const double fresh =
          mean + stats::draw_normal(rng_) / std::sqrt(prec);
      shift[g] = fresh - delta_[g];
      delta_[g] = fresh;
      ss += fresh * fresh;
    }
    for (std::size_t i = 0; i < n_; ++i) {
      resid_[i] -= shift[static_cast<std::size_t>(groups_.group_of[i])];
    }
    tau2_ = (opt_.nu_tau * lambda_tau_ + ss) /
            stats::draw_chisq(opt_.nu_tau + static_cast<double>(J), rng_);
  }

  void draw_sigma() {
    if (opt_.hooks.fixed_sigma) {
      sigma2_ = *opt_.hooks.fixed_sigma * *opt_.hooks.fixed_sigma;
      return;
    }
    double ssr = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      ssr += resid_[i] * resid_[i];
    }
    sigma2_ = (nu_ * lambda_ + ssr) /
              stats::draw_chisq(nu_ + static_cast<double>(n_), rng_);
  }

  TreeEnsembleDraw snapshot() const {
    TreeEnsembleDraw d;
    d.trees = trees_;
    const double scale = scaling_.scale();
    d.sigma = std::sqrt(sigma2_) * scale;
    if (random_intercept()) {
      for (std::size_t g = 0; g < delta_.size(); ++g) {
        d.random_intercepts.emplace(groups_.ids[g], delta_[g] * scale);
      }
      d.tau2 = tau2_ * scale * scale;
    }
    return d;
  }

  const FeatureMatrix& X_;
  const BartOptions& opt_;
  Rng& rng_;
  ModelKind kind_;
  Scaling scaling_;
  std::size_t n_;
  std::size_t p_;

  std::vector<double> y_;
  std::vector<int> response_;
  double probit_offset_ = 0.0;
  std::vector<double> fit_;    // scratch for full recomputation
  std::vector<double> resid_;  // y - fit, kept current by every update
  std::vector<Tree> trees_;
  std::vector<int> leaf_of_;

  GroupData groups_;
  std::vector<double> delta_;
  double tau2_ = 1.0;
  double lambda_tau_ = 1.0;

  double sigma2_ = 1.0;
  double sigma_mu2_ = 1.0;
  double nu_ = 3.0;
  double lambda_ = 1.0;

  std::vector<std::size_t> units_;
  std::vector<int> leaves_;
  std::vector<int> nogs_;
  std::vector<std::size_t> present_levels_;
  std::vector<LeafStats> node_stats_;
  std::vector<double> node_shift_;
  std::size_t proposals_ = 0;
  std::size_t acceptances_ = 0;
};

PosteriorChain BackfitSampler::run() {
  const auto B = static_cast<std::size_t>(opt_.n_trees);
  trees_.assign(B, Tree{});
  leaf_of_.assign(B * n_, 0);
  fit_.assign(n_, 0.0);
  resid_.assign(n_, 0.0);
  units_.reserve(n_);
  nu_ = opt_.nu;

  const double sqrt_b = std::sqrt(static_cast<double>(B));
  if (probit()) {
    sigma_mu2_ = std::pow(3.0 / (opt_.k * sqrt_b), 2);
    sigma2_ = 1.0;
  } else {
    sigma_mu2_ = std::pow(0.5 / (opt_.k * sqrt_b), 2);
    // Prior sigma^2 ~ nu * lambda / chi2_nu with Pr(sigma < sd(y)) = q.
    const double mean =
        std::accumulate(y_.begin(), y_.end(), 0.0) / static_cast<double>(n_);
    double ss = 0.0;
    for (double v : y_) ss += (v - mean) * (v - mean);
    const double var = ss / static_cast<double>(n_ - 1);
    lambda_ = std::max(var * stats::chisq_quantile(1.0 - opt_.q, nu_) / nu_,
                       1e-8);
    sigma2_ = std::max(var, lambda_);
    if (opt_.hooks.fixed_sigma) {
      sigma2_ = *opt_.hooks.fixed_sigma * *opt_.hooks.fixed_sigma;
    }
  }

  PosteriorChain chain;
  chain.kind = kind_;
  chain.scaling = scaling_;
  chain.feature_names = X_.names();
  chain.feature_kinds = X_.kinds();
  chain.feature_levels = X_.levels();
  chain.draws.reserve(static_cast<std::size_t>(opt_.n_keep));

  const long total =
      static_cast<long>(opt_.n_burn) + static_cast<long>(opt_.n_keep) * opt_.thin;
  for (long iter = 0; iter < total; ++iter) {
    if (iter % 64 == 0) recompute_fit();
    if (probit()) draw_latent();
    for (std::size_t b = 0; b < B; ++b) update_tree(b);
    if (random_intercept()) draw_intercepts();
    if (!probit()) draw_sigma();

    const long kept = iter - opt_.n_burn + 1;
    if (kept > 0 && kept % opt_.thin == 0) chain.draws.push_back(snapshot());
  }
  chain.proposals = proposals_;
  chain.acceptances = acceptances_;
  return chain;
}

void check_inputs(const FeatureMatrix& X, std::size_t n_response) {
  if (X.rows() != n_response) {
    throw Error(ErrorCode::ColumnMismatch,
                "covariate rows do not match the response length");
  }
  if (X.rows() < 10) {
    throw Error(ErrorCode::TooFewObservations, "need at least 10 observations");
  }
  if (X.cols() == 0) {
    throw Error(ErrorCode::ColumnMismatch, "need at least one covariate");
  }
}

Scaling continuous_scaling(std::span<const double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) {
      throw Error(ErrorCode::NonFiniteInput, "response is missing or non-finite",
                  static_cast<std::int64_t>(i + 1));
    }
  }
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  Scaling s{*lo, *hi};
  if (!(s.scale() > 0)) {
    s.y_min = *lo - 0.5;
    s.y_max = *lo + 0.5;
  }
  return s;
}

double probit_offset(std::span<const int> r) {
  std::size_t ones = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] != 0 && r[i] != 1) {
      throw Error(ErrorCode::NonFiniteInput, "binary response must be 0/1",
                  static_cast<std::int64_t>(i + 1));
    }
    ones += static_cast<std::size_t>(r[i]);
  }
  if (ones == 0 || ones == r.size()) {
    throw Error(ErrorCode::SingleClass, "binary response has a single class");
  }
  return stats::normal_quantile(static_cast<double>(ones) /
                                static_cast<double>(r.size()));
}

GroupData checked_groups(std::span<const std::int64_t> groups, std::size_t n) {
  if (groups.size() != n) {
    throw Error(ErrorCode::ColumnMismatch, "group ids must cover every unit");
  }
  GroupData g = index_groups(groups);
  if (g.ids.size() < 2) {
    throw Error(ErrorCode::SingleGroup, "random intercepts need >= 2 groups");
  }
  return g;
}

double group_mean_variance(const GroupData& g, std::span<const double> v) {
  std::vector<double> sums(g.ids.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    sums[static_cast<std::size_t>(g.group_of[i])] += v[i];
  }
  double mean = 0.0;
  for (std::size_t k = 0; k < sums.size(); ++k) {
    sums[k] /= g.counts[k];
    mean += sums[k];
  }
  mean /= static_cast<double>(sums.size());
  double ss = 0.0;
  for (double s : sums) ss += (s - mean) * (s - mean);
  return ss / static_cast<double>(sums.size() - 1);
}

PosteriorChain run_continuous(const Table& X, std::span<const double> y,
                              const GroupData* groups,
                              const BartOptions& options, Rng& rng) {
  validate(options);
  const FeatureMatrix fm = FeatureMatrix::from_table(X);
  check_inputs(fm, y.size());
  const Scaling scaling = continuous_scaling(y);
  std::vector<double> target(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    target[i] = scaling.to_internal(y[i]);
  }
  const ModelKind kind = groups ? ModelKind::continuous_random_intercept
                                : ModelKind::continuous;
  BackfitSampler sampler(fm, options, rng, kind, scaling);
  if (groups) {
    const double lambda_tau =
        std::max(group_mean_variance(*groups, target), 1e-8);
    sampler.set_groups(*groups, lambda_tau);
  }
  sampler.set_continuous_target(std::move(target));
  return sampler.run();
}

PosteriorChain run_probit(const Table& X, std::span<const int> r,
                          const GroupData* groups, const BartOptions& options,
                          Rng& rng) {
  validate(options);
  const FeatureMatrix fm = FeatureMatrix::from_table(X);
  check_inputs(fm, r.size());
  const double offset = probit_offset(r);
  const Scaling scaling{offset - 0.5, offset + 0.5};
  const ModelKind kind =
      groups ? ModelKind::probit_random_intercept : ModelKind::probit;
  BackfitSampler sampler(fm, options, rng, kind, scaling);
  sampler.set_probit_response(r, offset);
  if (groups) {
    // Spread of the probit-transformed group response rates.
    std::vector<double> transformed(r.size());
    std::vector<double> rates(groups->ids.size(), 0.0);
    for (std::size_t i = 0; i < r.size(); ++i) {
      rates[static_cast<std::size_t>(groups->group_of[i])] += r[i];
    }
    for (std::size_t k = 0; k < rates.size(); ++k) {
      const double rate =
          std::clamp(rates[k] / groups->counts[k], 0.025, 0.975);
      rates[k] = stats::normal_quantile(rate);
    }
    for (std::size_t i = 0; i < r.size(); ++i) {
      transformed[i] = rates[static_cast<std::size_t>(groups->group_of[i])];
    }
    sampler.set_groups(*groups,
                       std::max(group_mean_variance(*groups, transformed), 1e-4));
  }
  return sampler.run();
}

}  // namespace

PosteriorChain fit_bart(const Table& X, std::span<const double> y,
                        const BartOptions& options, Rng& rng) {
  return run_continuous(X, y, nullptr, options, rng);
}

PosteriorChain fit_bart_probit(const Table& X, std::span<const int> r,
                               const BartOptions& options, Rng& rng) {
  return run_probit(X, r, nullptr, options, rng);
}

PosteriorChain fit_rbart(const Table& X, std::span<const double> y,
                         std::span<const std::int64_t> groups,
                         const BartOptions& options, Rng& rng) {
  const GroupData g = checked_groups(groups, y.size());
  return run_continuous(X, y, &g, options, rng);
}

PosteriorChain fit_rbart_probit(const Table& X, std::span<const int> r,
                                std::span<const std::int64_t> groups,
                                const BartOptions& options, Rng& rng) {
  const GroupData g = checked_groups(groups, r.size());
  return run_probit(X, r, &g, options, rng);
}

// ---------------------------------------------------------------------------
// Prediction

FeatureMatrix chain_features(const PosteriorChain& chain, const Table& X_new) {
  if (X_new.cols() != chain.feature_names.size()) {
    throw Error(ErrorCode::ColumnMismatch,
                "expected " + std::to_string(chain.feature_names.size()) +
                    " covariates, got " + std::to_string(X_new.cols()));
  }
  for (std::size_t j = 0; j < X_new.cols(); ++j) {
    const Column& c = X_new.column(j);
    if (c.name != chain.feature_names[j] || c.kind != chain.feature_kinds[j]) {
      throw Error(ErrorCode::ColumnMismatch,
                  "covariate " + c.name + " does not match training column " +
                      chain.feature_names[j]);
    }
    if (c.kind == ColumnKind::categorical && c.levels != chain.feature_levels[j]) {
      throw Error(ErrorCode::ColumnMismatch,
                  "levels of " + c.name + " differ from training");
    }
  }
  return FeatureMatrix::from_table(X_new);
}

std::vector<double> predict(const PosteriorChain& chain, const Table& X_new,
                            DrawSelection which,
                            std::span<const std::int64_t> groups) {
  return predict(chain, chain_features(chain, X_new), which, groups);
}

std::vector<double> predict(const PosteriorChain& chain,
                            const FeatureMatrix& X, DrawSelection which,
                            std::span<const std::int64_t> groups) {
  if (chain.draws.empty()) {
    throw Error(ErrorCode::IndexOutOfRange, "chain holds no draws");
  }
  if (X.cols() != chain.feature_names.size()) {
    throw Error(ErrorCode::ColumnMismatch, "covariate count differs from training");
  }
  const std::size_t n = X.rows();
  if (chain.random_intercept() && groups.size() != n) {
    throw Error(ErrorCode::ColumnMismatch,
                "random-intercept prediction needs a group id per unit");
  }

  auto one_draw = [&](const TreeEnsembleDraw& d, std::vector<double>& out,
                      double weight) {
    std::vector<double> latent(n, 0.0);
    for (const Tree& t : d.trees) {
      for (std::size_t i = 0; i < n; ++i) latent[i] += t.evaluate(X, i);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double v = chain.scaling.from_internal(latent[i]);
      if (chain.random_intercept()) {
        auto it = d.random_intercepts.find(groups[i]);
        if (it != d.random_intercepts.end()) v += it->second;
      }
      if (chain.probit()) v = stats::normal_cdf(v);
      out[i] += weight * v;
    }
  };

  std::vector<double> out(n, 0.0);
  if (const auto* index = std::get_if<std::size_t>(&which)) {
    if (*index >= chain.draws.size()) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "draw index " + std::to_string(*index) + " out of range");
    }
    one_draw(chain.draws[*index], out, 1.0);
    return out;
  }
  const double w = 1.0 / static_cast<double>(chain.draws.size());
  for (const auto& d : chain.draws) one_draw(d, out, w);
  return out;
}

Records chain_records(const PosteriorChain& chain) {
  Records rec;
  rec.header = {"draw", "sigma", "leaves", "mean_depth", "tau2"};
  for (std::size_t d = 0; d < chain.draws.size(); ++d) {
    const auto& draw = chain.draws[d];
    std::int64_t leaves = 0;
    double depth = 0.0;
    for (const auto& t : draw.trees) {
      leaves += static_cast<std::int64_t>(t.leaf_count());
      depth += t.depth();
    }
    depth /= static_cast<double>(std::max<std::size_t>(1, draw.trees.size()));
    rec.rows.push_back({static_cast<std::int64_t>(d), draw.sigma, leaves, depth,
                        draw.tau2});
  }
  return rec;
}

}  // namespace twophase
