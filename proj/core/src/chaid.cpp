#include <algorithm>
#include <cmath>
#include <numeric>

#include "twophase/error.hpp"
#include "twophase/propensity.hpp"
#include "twophase/stats.hpp"

namespace twophase {

namespace {

struct Counts {
  double n = 0;
  double ones = 0;
};

// Pearson chi-square of a k x 2 table; rows with no units are ignored.
double pearson_chisq(const std::vector<Counts>& rows) {
  double n = 0, ones = 0;
  for (const auto& c : rows) {
    n += c.n;
    ones += c.ones;
  }
  if (n == 0 || ones == 0 || ones == n) return 0.0;
  const double rate = ones / n;
  double stat = 0.0;
  for (const auto& c : rows) {
    if (c.n == 0) continue;
    const double e1 = c.n * rate;
    const double e0 = c.n - e1;
    stat += (c.ones - e1) * (c.ones - e1) / e1 +
            (c.n - c.ones - e0) * (c.n - c.ones - e0) / e0;
  }
  return stat;
}

std::size_t level_count(const Column& c) {
  return c.kind == ColumnKind::categorical ? c.levels.size() : 2;
}

struct Candidate {
  std::vector<std::vector<int>> groups;  // level codes per merged group
  double adjusted_p = 1.0;
};

class Grower {
 public:
  Grower(const Table& X, std::span<const int> r, const ChaidOptions& opt)
      : X_(X), r_(r), opt_(opt) {}

  // Returns the id of the subtree root grown for `units`.
  int grow(const std::vector<std::size_t>& units,
           std::vector<ChaidTree::Node>& nodes,
           std::vector<std::vector<std::size_t>>& leaf_units) {
    const int self = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (static_cast<int>(units.size()) >= opt_.min_node) {
      int best_var = -1;
      Candidate best;
      for (std::size_t j = 0; j < X_.cols(); ++j) {
        Candidate c = merge_categories(j, units);
        if (c.groups.size() < 2) continue;
        if (best_var < 0 || c.adjusted_p < best.adjusted_p) {
          best_var = static_cast<int>(j);
          best = std::move(c);
        }
      }
      if (best_var >= 0 && best.adjusted_p < opt_.alpha_split) {
        const Column& col = X_.column(static_cast<std::size_t>(best_var));
        const std::size_t L = level_count(col);
        std::vector<int> group_of_level(L, -1);
        for (std::size_t g = 0; g < best.groups.size(); ++g) {
          for (int l : best.groups[g]) {
            group_of_level[static_cast<std::size_t>(l)] = static_cast<int>(g);
          }
        }
        std::vector<std::vector<std::size_t>> parts(best.groups.size());
        for (std::size_t i : units) {
          const auto l = static_cast<std::size_t>(col.values[i]);
          parts[static_cast<std::size_t>(group_of_level[l])].push_back(i);
        }
        const bool big_enough =
            std::all_of(parts.begin(), parts.end(), [&](const auto& p) {
              return static_cast<int>(p.size()) >= opt_.min_child;
            });
        if (big_enough) {
          // Levels unseen in this node follow the largest child.
          std::size_t largest = 0;
          for (std::size_t g = 1; g < parts.size(); ++g) {
            if (parts[g].size() > parts[largest].size()) largest = g;
          }
          std::vector<int> children;
          for (const auto& part : parts) {
            children.push_back(grow(part, nodes, leaf_units));
          }
          ChaidTree::Node& me = nodes[static_cast<std::size_t>(self)];
          me.predictor = best_var;
          me.children = children;
          me.child_of_level.assign(L, 0);
          for (std::size_t l = 0; l < L; ++l) {
            const int g = group_of_level[l];
            me.child_of_level[l] = children[g >= 0 ? static_cast<std::size_t>(g) : largest];
          }
          return self;
        }
      }
    }
    nodes[static_cast<std::size_t>(self)].cell = static_cast<int>(leaf_units.size());
    leaf_units.push_back(units);
    return self;
  }

 private:
  Candidate merge_categories(std::size_t j, const std::vector<std::size_t>& units) {
    const Column& col = X_.column(j);
    const std::size_t L = level_count(col);
    std::vector<Counts> per_level(L);
    for (std::size_t i : units) {
      Counts& c = per_level[static_cast<std::size_t>(col.values[i])];
      c.n += 1;
      c.ones += r_[i];
    }
    Candidate cand;
    std::vector<Counts> totals;
    for (std::size_t l = 0; l < L; ++l) {
      if (per_level[l].n > 0) {
        cand.groups.push_back({static_cast<int>(l)});
        totals.push_back(per_level[l]);
      }
    }
    const int present = static_cast<int>(cand.groups.size());
    while (cand.groups.size() > 1) {
      double worst_p = -1.0;
      std::size_t wa = 0, wb = 0;
      for (std::size_t a = 0; a < cand.groups.size(); ++a) {
        for (std::size_t b = a + 1; b < cand.groups.size(); ++b) {
          const double p =
              stats::chisq_upper_tail(pearson_chisq({totals[a], totals[b]}), 1.0);
          if (p > worst_p) {
            worst_p = p;
            wa = a;
            wb = b;
          }
        }
      }
      if (worst_p < opt_.alpha_merge) break;
      auto& ga = cand.groups[wa];
      ga.insert(ga.end(), cand.groups[wb].begin(), cand.groups[wb].end());
      std::sort(ga.begin(), ga.end());
      totals[wa].n += totals[wb].n;
      totals[wa].ones += totals[wb].ones;
      cand.groups.erase(cand.groups.begin() + static_cast<std::ptrdiff_t>(wb));
      totals.erase(totals.begin() + static_cast<std::ptrdiff_t>(wb));
    }
    const int k = static_cast<int>(cand.groups.size());
    if (k >= 2) {
      const double p = stats::chisq_upper_tail(pearson_chisq(totals), k - 1.0);
      cand.adjusted_p = std::min(1.0, p * bonferroni_multiplier(present, k));
    }
    return cand;
  }

  const Table& X_;
  std::span<const int> r_;
  const ChaidOptions& opt_;
};

}  // namespace

double bonferroni_multiplier(int c, int r) {
  if (r < 1 || c < r) return 1.0;
  // Stirling number of the second kind S(c, r).
  double sum = 0.0;
  double fact_i = 1.0;
  for (int i = 0; i < r; ++i) {
    if (i > 0) fact_i *= i;
    double fact_ri = 1.0;
    for (int k = 2; k <= r - i; ++k) fact_ri *= k;
    const double term = std::pow(static_cast<double>(r - i), c) / (fact_i * fact_ri);
    sum += (i % 2 == 0) ? term : -term;
  }
  return std::max(1.0, std::round(sum));
}

int ChaidTree::cell_for(const Table& X, std::size_t row) const {
  int id = 0;
  while (nodes_[static_cast<std::size_t>(id)].predictor >= 0) {
    const Node& nd = nodes_[static_cast<std::size_t>(id)];
    const auto l = static_cast<std::size_t>(
        X.at(row, static_cast<std::size_t>(nd.predictor)));
    id = l < nd.child_of_level.size() ? nd.child_of_level[l]
                                      : nd.child_of_level.front();
  }
  return nodes_[static_cast<std::size_t>(id)].cell;
}

ChaidTree grow_chaid(const Table& X, std::span<const int> r,
                     const ChaidOptions& options) {
  if (r.size() != X.rows()) {
    throw Error(ErrorCode::ColumnMismatch,
                "response length does not match the table rows");
  }
  if (options.min_child < 1) {
    throw Error(ErrorCode::InvalidConfig, "min_child must be at least 1");
  }
  for (const auto& c : X.columns()) {
    if (c.kind == ColumnKind::continuous) {
      throw Error(ErrorCode::InvalidConfig,
                  "CHAID needs categorical inputs; discretize " + c.name);
    }
    for (std::size_t i = 0; i < X.rows(); ++i) {
      if (is_missing(c.values[i])) {
        throw Error(ErrorCode::MissingCovariate, "covariate " + c.name + " is missing",
                    static_cast<std::int64_t>(i + 1));
      }
    }
  }

  ChaidTree tree;
  std::vector<std::vector<std::size_t>> leaf_units;
  std::vector<std::size_t> all(X.rows());
  std::iota(all.begin(), all.end(), 0);
  Grower grower(X, r, options);
  grower.grow(all, tree.nodes_, leaf_units);

  // Parent links for the zero-respondent merge.
  std::vector<int> parent(tree.nodes_.size(), -1);
  for (std::size_t id = 0; id < tree.nodes_.size(); ++id) {
    for (int c : tree.nodes_[id].children) parent[static_cast<std::size_t>(c)] = static_cast<int>(id);
  }
  const std::size_t n_leaves = leaf_units.size();
  std::vector<int> leaf_node(n_leaves);
  for (std::size_t id = 0; id < tree.nodes_.size(); ++id) {
    if (tree.nodes_[id].cell >= 0) {
      leaf_node[static_cast<std::size_t>(tree.nodes_[id].cell)] = static_cast<int>(id);
    }
  }
  std::vector<Counts> cell_counts(n_leaves);
  for (std::size_t c = 0; c < n_leaves; ++c) {
    for (std::size_t i : leaf_units[c]) {
      cell_counts[c].n += 1;
      cell_counts[c].ones += r[i];
    }
  }
  auto leaves_under = [&](int root) {
    std::vector<int> out, stack{root};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      const auto& nd = tree.nodes_[static_cast<std::size_t>(id)];
      if (nd.cell >= 0) out.push_back(nd.cell);
      for (auto it = nd.children.rbegin(); it != nd.children.rend(); ++it) stack.push_back(*it);
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  std::vector<int> target(n_leaves);
  std::iota(target.begin(), target.end(), 0);
  for (std::size_t c = 0; c < n_leaves; ++c) {
    if (cell_counts[c].ones > 0) continue;
    int up = parent[static_cast<std::size_t>(leaf_node[c])];
    while (up >= 0) {
      int pick = -1;
      double best_gap = 0.0;
      for (int other : leaves_under(up)) {
        const auto o = static_cast<std::size_t>(other);
        if (o == c || cell_counts[o].ones == 0) continue;
        const double gap = cell_counts[o].ones / cell_counts[o].n;
        if (pick < 0 || gap < best_gap) {
          pick = other;
          best_gap = gap;
        }
      }
      if (pick >= 0) {
        target[c] = pick;
        break;
      }
      up = parent[static_cast<std::size_t>(up)];
    }
  }

  // Renumber surviving cells contiguously in leaf order.
  std::vector<int> renumber(n_leaves, -1);
  int next = 0;
  for (std::size_t c = 0; c < n_leaves; ++c) {
    if (target[c] == static_cast<int>(c)) renumber[c] = next++;
  }
  CellPartition& part = tree.partition_;
  part.cell_of.assign(X.rows(), 0);
  part.sizes.assign(static_cast<std::size_t>(next), 0);
  part.respondents.assign(static_cast<std::size_t>(next), 0);
  for (std::size_t c = 0; c < n_leaves; ++c) {
    const int cell = renumber[static_cast<std::size_t>(target[c])];
    tree.nodes_[static_cast<std::size_t>(leaf_node[c])].cell = cell;
    for (std::size_t i : leaf_units[c]) {
      part.cell_of[i] = cell;
      ++part.sizes[static_cast<std::size_t>(cell)];
      part.respondents[static_cast<std::size_t>(cell)] += r[i];
    }
  }
  return tree;
}

CellPartition chaid_cells(const Table& X, std::span<const int> r,
                          const ChaidOptions& options) {
  return grow_chaid(X, r, options).partition();
}

std::vector<double> quintile_breaks(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  if (v.empty()) return {};
  std::sort(v.begin(), v.end());
  std::vector<double> breaks;
  for (int k = 1; k <= 4; ++k) {
    const double pos = 0.2 * k * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double b = v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    if (breaks.empty() || b > breaks.back()) breaks.push_back(b);
  }
  // A break at the maximum would leave an empty top bin.
  while (!breaks.empty() && breaks.back() >= v.back()) breaks.pop_back();
  return breaks;
}

Table discretize(const Table& X, std::vector<std::vector<double>>* breaks,
                 bool reuse_breaks) {
  std::vector<Column> out;
  std::size_t k = 0;
  if (breaks && !reuse_breaks) breaks->clear();
  for (const auto& c : X.columns()) {
    if (c.kind == ColumnKind::categorical) {
      out.push_back(c);
      continue;
    }
    Column d{c.name, ColumnKind::categorical, {}, {}};
    if (c.kind == ColumnKind::binary) {
      d.levels = {"0", "1"};
      d.values = c.values;
      out.push_back(std::move(d));
      continue;
    }
    std::vector<double> b;
    if (reuse_breaks) {
      if (!breaks || k >= breaks->size()) {
        throw Error(ErrorCode::ColumnMismatch, "missing quintile breaks for " + c.name);
      }
      b = (*breaks)[k];
    } else {
      b = quintile_breaks(c.values);
      if (breaks) breaks->push_back(b);
    }
    ++k;
    for (std::size_t l = 0; l <= b.size(); ++l) d.levels.push_back("q" + std::to_string(l + 1));
    d.values.resize(c.values.size());
    for (std::size_t i = 0; i < c.values.size(); ++i) {
      d.values[i] = static_cast<double>(
          std::lower_bound(b.begin(), b.end(), c.values[i]) - b.begin());
    }
    out.push_back(std::move(d));
  }
  return Table(std::move(out));
}

}  // namespace twophase
