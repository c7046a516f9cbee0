#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "twophase/bart.hpp"
#include "twophase/dataset.hpp"
#include "twophase/rng.hpp"

namespace twophase {

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticFit {
  Eigen::VectorXd coefficients;
  int iterations = 0;
  /// max |X'(r - p)| at the returned coefficients.
  double max_score = 0.0;
};

/// Maximum-likelihood logit fit by IRLS. `X` is used as given, so include a
/// column of ones for an intercept.
LogisticFit fit_logistic(const Eigen::MatrixXd& X, std::span<const int> r);

/// Design matrix with a leading intercept column. Categorical columns are
/// dummy coded against their first level.
Eigen::MatrixXd design_matrix(const Table& X, bool intercept = true);

/// Convenience overload: intercept plus `design_matrix(X)`.
LogisticFit fit_logistic(const Table& X, std::span<const int> r);

std::vector<double> logistic_probabilities(const Eigen::MatrixXd& X,
                                           const Eigen::VectorXd& coefficients);

// ---------------------------------------------------------------------------
// Lasso screening

struct LassoPath {
  std::vector<double> lambdas;  // decreasing
  std::vector<double> intercepts;
  std::vector<Eigen::VectorXd> coefficients;  // original column scale
  std::vector<double> deviances;              // training deviance per lambda
};

/// L1-penalised logistic path by coordinate descent on the IRLS quadratic
/// approximation. Columns are standardised internally; the intercept is not
/// penalised. An empty `lambdas` requests the default 50-point log grid from
/// lambda_max down to lambda_max * 1e-3.
LassoPath lasso_logistic_path(const Eigen::MatrixXd& X, std::span<const int> r,
                              std::span<const double> lambdas = {});

/// Smallest lambda at which every penalised coefficient is zero.
double lasso_lambda_max(const Eigen::MatrixXd& X, std::span<const int> r);

struct LassoSelection {
  std::vector<std::size_t> columns;  // nonzero at the chosen lambda
  double lambda = 0.0;
  double lambda_max = 0.0;
  double cv_deviance = 0.0;
  double cv_deviance_at_max = 0.0;
};

/// Picks lambda by minimum mean K-fold cross-validated deviance and returns
/// the columns with nonzero coefficients there.
LassoSelection lasso_logistic_select(const Eigen::MatrixXd& X,
                                     std::span<const int> r, int n_folds,
                                     Rng& rng);

/// Table form: a categorical column is kept when any of its dummies is.
std::vector<std::string> lasso_screen(const Table& X, std::span<const int> r,
                                      int n_folds, Rng& rng);

// ---------------------------------------------------------------------------
// CHAID adjustment cells

struct ChaidOptions {
  double alpha_merge = 0.05;
  double alpha_split = 0.05;
  int min_node = 50;
  int min_child = 25;
};

struct CellPartition {
  std::vector<int> cell_of;  // per unit, 0-based
  std::vector<int> respondents;
  std::vector<int> sizes;

  std::size_t cell_count() const { return sizes.size(); }
  double response_rate(std::size_t cell) const {
    return static_cast<double>(respondents[cell]) / sizes[cell];
  }
};

/// Fitted CHAID tree; assigns new units (same columns and levels) to cells.
class ChaidTree {
 public:
  struct Node {
    int predictor = -1;                 // -1 for a leaf
    std::vector<int> child_of_level;    // level code -> child node
    std::vector<int> children;
    int cell = -1;
  };

  const CellPartition& partition() const { return partition_; }
  int cell_for(const Table& X, std::size_t row) const;
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  friend ChaidTree grow_chaid(const Table&, std::span<const int>,
                              const ChaidOptions&);
  std::vector<Node> nodes_;
  CellPartition partition_;
};

/// `X` must be all-categorical (binary columns are accepted as two levels).
ChaidTree grow_chaid(const Table& X, std::span<const int> r,
                     const ChaidOptions& options = {});
CellPartition chaid_cells(const Table& X, std::span<const int> r,
                          const ChaidOptions& options = {});

/// Kass Bonferroni multiplier for reducing `c` ordered-free categories to
/// `r` groups.
double bonferroni_multiplier(int c, int r);

/// Quintile cut points of a continuous column (the 20/40/60/80% order
/// statistics, duplicates removed).
std::vector<double> quintile_breaks(std::span<const double> values);

/// Converts continuous columns to categorical quintile bins using `breaks`
/// (one entry per continuous column, in column order; empty to compute from
/// `X`) and binary columns to two-level categoricals.
Table discretize(const Table& X,
                 std::vector<std::vector<double>>* breaks = nullptr,
                 bool reuse_breaks = false);

// ---------------------------------------------------------------------------
// Nonresponse adjustment

enum class AdjustmentMethod { LGM, CHAID, BART, rBART };

std::string_view adjustment_method_name(AdjustmentMethod m);

/// Units for a propensity model: auxiliary covariates and their design
/// variables.
struct PropensityFrame {
  Table covariates;
  std::vector<double> phase1_weight;
  std::vector<std::int64_t> stratum;
  std::vector<std::int64_t> cluster;

  std::size_t size() const { return covariates.rows(); }
  PropensityFrame subset(std::span<const std::size_t> rows) const;
};

struct AdjustmentOptions {
  double clip = 0.01;
  int lasso_folds = 10;
  /// Lasso screening runs before LGM and CHAID when there are more than
  /// this many auxiliary covariates.
  std::size_t screen_above = 5;
  ChaidOptions chaid;
  BartOptions bart;
};

/// Fitted propensity model that can score units outside the training set.
class PropensityModel {
 public:
  virtual ~PropensityModel() = default;
  virtual std::vector<double> predict(const PropensityFrame& units) const = 0;
};

struct AdjustmentResult {
  AdjustmentMethod method = AdjustmentMethod::LGM;
  /// Fitted propensity per phase-II-selected unit, before clipping.
  std::vector<double> propensity;
  /// a_i per phase-II respondent, in the order of the selected units.
  std::vector<double> adjustment;
  std::vector<std::string> covariates_used;
  std::shared_ptr<const PropensityModel> model;

  /// a_i for arbitrary units from the fitted model, clipped as in training.
  std::vector<double> adjustments_for(const PropensityFrame& units,
                                      double clip) const;
};

/// Integer ids as a categorical column with a fixed level list. Ids missing
/// from `levels` map to the trailing "other" level.
Column id_column(std::string name, std::span<const std::int64_t> ids,
                 const std::vector<std::string>& levels);
/// Sorted distinct ids rendered as labels, followed by "other".
std::vector<std::string> id_levels(std::span<const std::int64_t> ids);

double clipped_adjustment(double propensity, double clip);

AdjustmentResult nonresponse_adjustment(AdjustmentMethod method,
                                        const PropensityFrame& selected,
                                        std::span<const int> respondent,
                                        const AdjustmentOptions& options,
                                        Rng& rng);

/// w_s = w_c / phase2_selection_prob * a.
std::vector<double> subsample_weights(std::span<const double> phase1_weight,
                                      double phase2_selection_prob,
                                      std::span<const double> adjustment);

/// Unit id, fitted propensity and adjustment (NA for nonrespondents).
Records adjustment_records(const AdjustmentResult& result,
                           std::span<const int> respondent,
                           double clip = 0.01);

}  // namespace twophase
