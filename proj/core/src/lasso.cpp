#include <algorithm>
#include <cmath>
#include <numeric>

#include "twophase/error.hpp"
#include "twophase/propensity.hpp"
#include "twophase/stats.hpp"

namespace twophase {

namespace {

constexpr int kGridSize = 50;
constexpr double kGridRatio = 1e-3;
constexpr int kMaxOuter = 100;
constexpr int kMaxInner = 1000;

struct Standardized {
  Eigen::MatrixXd Z;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // 0 marks a constant column
};

Standardized standardize(const Eigen::MatrixXd& X) {
  Standardized s;
  const double n = static_cast<double>(X.rows());
  s.mean = X.colwise().mean();
  s.sd.resize(X.cols());
  s.Z = X.rowwise() - s.mean.transpose();
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double sd = std::sqrt(s.Z.col(j).squaredNorm() / n);
    s.sd(j) = sd > 1e-12 ? sd : 0.0;
    if (s.sd(j) > 0) {
      s.Z.col(j) /= sd;
    } else {
      s.Z.col(j).setZero();
    }
  }
  return s;
}

void check_inputs(const Eigen::MatrixXd& X, std::span<const int> r) {
  if (static_cast<std::size_t>(X.rows()) != r.size()) {
    throw Error(ErrorCode::ColumnMismatch,
                "response length does not match the design rows");
  }
  if (r.empty()) throw Error(ErrorCode::EmptyInput, "no observations");
  if (!X.allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, "design matrix has non-finite values");
  }
  const auto ones = std::count(r.begin(), r.end(), 1);
  if (ones == 0 || static_cast<std::size_t>(ones) == r.size()) {
    throw Error(ErrorCode::Separation, "response has a single class");
  }
}

// Gradients within rounding of the threshold count as zero, so a column
// that only ties an active one (e.g. an exact duplicate) stays out.
double soft_threshold(double z, double g) {
  const double slack = g * (1.0 + 1e-10);
  if (z > slack) return z - g;
  if (z < -slack) return z + g;
  return 0.0;
}

double deviance(const Eigen::MatrixXd& Z, std::span<const int> r, double b0,
                const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = (Z * beta).array() + b0;
  double dev = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double p =
        std::clamp(stats::inv_logit(eta(i)), 1e-15, 1.0 - 1e-15);
    dev -= 2.0 * (r[static_cast<std::size_t>(i)] ? std::log(p)
                                                 : std::log1p(-p));
  }
  return dev;
}

// Penalised fit on standardised columns, warm-started from (b0, beta).
void solve_at(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
              double lambda, double& b0, Eigen::VectorXd& beta) {
  const Eigen::Index n = Z.rows();
  const Eigen::Index p = Z.cols();
  const double dn = static_cast<double>(n);
  Eigen::VectorXd w(n), z(n), resid(n);
  for (int outer = 0; outer < kMaxOuter; ++outer) {
    const Eigen::VectorXd eta = (Z * beta).array() + b0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pi = stats::inv_logit(eta(i));
      w(i) = std::max(pi * (1.0 - pi), 1e-5);
      z(i) = eta(i) + (y(i) - pi) / w(i);
    }
    const double old_b0 = b0;
    const Eigen::VectorXd old_beta = beta;
    resid = z - eta;  // working residual
    const double wsum = w.sum();
    for (int inner = 0; inner < kMaxInner; ++inner) {
      double max_change = 0.0;
      const double shift = w.dot(resid) / wsum;
      b0 += shift;
      resid.array() -= shift;
      max_change = std::max(max_change, std::abs(shift));
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto zj = Z.col(j);
        const double curv = zj.cwiseProduct(w).dot(zj) / dn;
        if (curv <= 0) continue;
        const double grad = zj.cwiseProduct(w).dot(resid) / dn + curv * beta(j);
        const double fresh = soft_threshold(grad, lambda) / curv;
        const double delta = fresh - beta(j);
        if (delta != 0.0) {
          resid -= delta * zj;
          beta(j) = fresh;
          max_change = std::max(max_change, std::abs(delta) * std::sqrt(curv));
        }
      }
      if (max_change < 1e-7) break;
    }
    const double change = std::max(std::abs(b0 - old_b0),
                                   (beta - old_beta).cwiseAbs().maxCoeff());
    if (!std::isfinite(b0) || !beta.allFinite()) {
      throw Error(ErrorCode::Separation, "lasso coordinate descent diverged");
    }
    if (change < 1e-6) break;
  }
}

std::vector<double> default_grid(double lambda_max) {
  std::vector<double> grid(kGridSize);
  const double step = std::log(kGridRatio) / (kGridSize - 1);
  for (int k = 0; k < kGridSize; ++k) grid[k] = lambda_max * std::exp(step * k);
  return grid;
}

double lambda_max_of(const Standardized& s, std::span<const int> r) {
  const double n = static_cast<double>(r.size());
  const double rbar =
      static_cast<double>(std::accumulate(r.begin(), r.end(), 0)) / n;
  double lmax = 0.0;
  for (Eigen::Index j = 0; j < s.Z.cols(); ++j) {
    double g = 0.0;
    for (Eigen::Index i = 0; i < s.Z.rows(); ++i) {
      g += s.Z(i, j) * (r[static_cast<std::size_t>(i)] - rbar);
    }
    lmax = std::max(lmax, std::abs(g) / n);
  }
  return lmax;
}

struct StdPath {
  std::vector<double> b0;
  std::vector<Eigen::VectorXd> beta;
};

StdPath path_on(const Standardized& s, std::span<const int> r,
                std::span<const double> lambdas) {
  Eigen::VectorXd y(s.Z.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = r[static_cast<std::size_t>(i)];
  const double rbar = y.mean();
  double b0 = std::log(rbar / (1.0 - rbar));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(s.Z.cols());
  StdPath out;
  for (double lambda : lambdas) {
    solve_at(s.Z, y, lambda, b0, beta);
    out.b0.push_back(b0);
    out.beta.push_back(beta);
  }
  return out;
}

}  // namespace

double lasso_lambda_max(const Eigen::MatrixXd& X, std::span<const int> r) {
  check_inputs(X, r);
  return lambda_max_of(standardize(X), r);
}

LassoPath lasso_logistic_path(const Eigen::MatrixXd& X, std::span<const int> r,
                              std::span<const double> lambdas) {
  check_inputs(X, r);
  const Standardized s = standardize(X);
  std::vector<double> grid(lambdas.begin(), lambdas.end());
  if (grid.empty()) grid = default_grid(lambda_max_of(s, r));
  const StdPath fit = path_on(s, r, grid);

  LassoPath path;
  path.lambdas = grid;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(X.cols());
    double b0 = fit.b0[k];
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (s.sd(j) > 0) {
        coef(j) = fit.beta[k](j) / s.sd(j);
        b0 -= coef(j) * s.mean(j);
      }
    }
    path.intercepts.push_back(b0);
    path.coefficients.push_back(coef);
    path.deviances.push_back(deviance(s.Z, r, fit.b0[k], fit.beta[k]));
  }
  return path;
}

LassoSelection lasso_logistic_select(const Eigen::MatrixXd& X,
                                     std::span<const int> r, int n_folds,
                                     Rng& rng) {
  if (n_folds < 2) throw Error(ErrorCode::InvalidConfig, "n_folds must be >= 2");
  check_inputs(X, r);
  const auto n = static_cast<std::size_t>(X.rows());
  if (n < static_cast<std::size_t>(n_folds)) {
    throw Error(ErrorCode::TooFewObservations, "fewer observations than folds");
  }
  const Standardized full = standardize(X);
  const double lmax = lambda_max_of(full, r);
  const std::vector<double> grid = default_grid(lmax);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(n);
  for (std::size_t k = 0; k < n; ++k) {
    fold[order[k]] = static_cast<int>(k % static_cast<std::size_t>(n_folds));
  }

  std::vector<double> cv(grid.size(), 0.0);
  int used_folds = 0;
  for (int f = 0; f < n_folds; ++f) {
    std::vector<Eigen::Index> train, test;
    std::vector<int> r_train, r_test;
    for (std::size_t i = 0; i < n; ++i) {
      if (fold[i] == f) {
        test.push_back(static_cast<Eigen::Index>(i));
        r_test.push_back(r[i]);
      } else {
        train.push_back(static_cast<Eigen::Index>(i));
        r_train.push_back(r[i]);
      }
    }
    const auto ones = std::count(r_train.begin(), r_train.end(), 1);
    if (ones == 0 || static_cast<std::size_t>(ones) == r_train.size()) continue;
    const Eigen::MatrixXd Xtr = X(train, Eigen::all);
    const Eigen::MatrixXd Xte = X(test, Eigen::all);
    const Standardized s = standardize(Xtr);
    const StdPath fit = path_on(s, r_train, grid);
    Eigen::MatrixXd Zte = Xte.rowwise() - s.mean.transpose();
    for (Eigen::Index j = 0; j < Zte.cols(); ++j) {
      if (s.sd(j) > 0) {
        Zte.col(j) /= s.sd(j);
      } else {
        Zte.col(j).setZero();
      }
    }
    for (std::size_t k = 0; k < grid.size(); ++k) {
      cv[k] += deviance(Zte, r_test, fit.b0[k], fit.beta[k]) /
               static_cast<double>(test.size());
    }
    ++used_folds;
  }
  if (used_folds == 0) {
    throw Error(ErrorCode::Separation, "every training fold has a single class");
  }

  const auto best = static_cast<std::size_t>(
      std::min_element(cv.begin(), cv.end()) - cv.begin());
  const StdPath fit =
      path_on(full, r, std::span<const double>(grid.data(), best + 1));
  LassoSelection sel;
  sel.lambda = grid[best];
  sel.lambda_max = lmax;
  sel.cv_deviance = cv[best] / used_folds;
  sel.cv_deviance_at_max = cv[0] / used_folds;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (fit.beta.back()(j) != 0.0) sel.columns.push_back(static_cast<std::size_t>(j));
  }
  return sel;
}

std::vector<std::string> lasso_screen(const Table& X, std::span<const int> r,
                                      int n_folds, Rng& rng) {
  const Eigen::MatrixXd M = design_matrix(X, false);
  std::vector<std::size_t> owner;
  for (std::size_t c = 0; c < X.cols(); ++c) {
    const Column& col = X.column(c);
    const std::size_t width =
        col.kind == ColumnKind::categorical ? col.levels.size() - 1 : 1;
    owner.insert(owner.end(), width, c);
  }
  const LassoSelection sel = lasso_logistic_select(M, r, n_folds, rng);
  std::vector<bool> keep(X.cols(), false);
  for (std::size_t j : sel.columns) keep[owner[j]] = true;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < X.cols(); ++c) {
    if (keep[c]) names.push_back(X.column(c).name);
  }
  return names;
}

}  // namespace twophase
