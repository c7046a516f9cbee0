#include <cmath>

#include "twophase/error.hpp"
#include "twophase/propensity.hpp"
#include "twophase/stats.hpp"

namespace twophase {

namespace {

constexpr int kMaxIterations = 50;
constexpr double kScoreTolerance = 1e-8;
constexpr double kSeparationBound = 30.0;
constexpr double kSeparatedResidual = 1e-6;

void check_response(std::size_t n, std::span<const int> r) {
  if (r.size() != n) {
    throw Error(ErrorCode::ColumnMismatch,
                "response length does not match the design rows");
  }
  if (n == 0) throw Error(ErrorCode::EmptyInput, "no observations");
  std::size_t ones = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (r[i] != 0 && r[i] != 1) {
      throw Error(ErrorCode::NonFiniteInput, "response must be 0/1",
                  static_cast<std::int64_t>(i + 1));
    }
    ones += static_cast<std::size_t>(r[i]);
  }
  if (ones == 0 || ones == n) {
    throw Error(ErrorCode::Separation,
                "response has a single class; the likelihood has no maximum");
  }
}

}  // namespace

std::vector<double> logistic_probabilities(const Eigen::MatrixXd& X,
                                           const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  std::vector<double> p(static_cast<std::size_t>(eta.size()));
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    p[static_cast<std::size_t>(i)] = stats::inv_logit(eta(i));
  }
  return p;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& X, std::span<const int> r) {
  const auto n = static_cast<std::size_t>(X.rows());
  check_response(n, r);
  if (!X.allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, "design matrix has non-finite values");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) {
    throw Error(ErrorCode::SingularDesign,
                "design columns are linearly dependent (rank " +
                    std::to_string(qr.rank()) + " of " +
                    std::to_string(X.cols()) + ")");
  }

  Eigen::VectorXd y(X.rows());
  for (std::size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i)) = r[i];

  LogisticFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(X.cols());
  for (int it = 0;; ++it) {
    const Eigen::VectorXd eta = X * fit.coefficients;
    Eigen::VectorXd p(eta.size());
    Eigen::VectorXd w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p(i) = stats::inv_logit(eta(i));
      w(i) = std::max(p(i) * (1.0 - p(i)), 1e-12);
    }
    const Eigen::VectorXd score = X.transpose() * (y - p);
    fit.max_score = score.cwiseAbs().maxCoeff();
    fit.iterations = it;
    if (fit.max_score < kScoreTolerance || it == kMaxIterations) {
      // Complete separation converges numerically once every fitted
      // probability has collapsed onto its observed class.
      if ((y - p).cwiseAbs().maxCoeff() < kSeparatedResidual) {
        throw Error(ErrorCode::Separation,
                    "fitted probabilities reproduce the response exactly");
      }
      break;
    }
    const Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    fit.coefficients += info.ldlt().solve(score);
    if (!fit.coefficients.allFinite() ||
        fit.coefficients.cwiseAbs().maxCoeff() > kSeparationBound) {
      throw Error(ErrorCode::Separation,
                  "IRLS diverged: a coefficient exceeded 30 in magnitude");
    }
  }
  return fit;
}

Eigen::MatrixXd design_matrix(const Table& X, bool intercept) {
  Eigen::Index width = intercept ? 1 : 0;
  for (const auto& c : X.columns()) {
    width += c.kind == ColumnKind::categorical
                 ? static_cast<Eigen::Index>(c.levels.size()) - 1
                 : 1;
  }
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(X.rows()),
                                            std::max<Eigen::Index>(width, 0));
  Eigen::Index col = 0;
  if (intercept) M.col(col++).setOnes();
  for (const auto& c : X.columns()) {
    for (std::size_t i = 0; i < X.rows(); ++i) {
      if (is_missing(c.values[i])) {
        throw Error(ErrorCode::MissingCovariate,
                    "covariate " + c.name + " is missing",
                    static_cast<std::int64_t>(i + 1));
      }
    }
    if (c.kind == ColumnKind::categorical) {
      for (std::size_t i = 0; i < X.rows(); ++i) {
        const auto code = static_cast<Eigen::Index>(c.values[i]);
        if (code > 0) M(static_cast<Eigen::Index>(i), col + code - 1) = 1.0;
      }
      col += static_cast<Eigen::Index>(c.levels.size()) - 1;
    } else {
      for (std::size_t i = 0; i < X.rows(); ++i) {
        M(static_cast<Eigen::Index>(i), col) = c.values[i];
      }
      ++col;
    }
  }
  return M;
}

LogisticFit fit_logistic(const Table& X, std::span<const int> r) {
  return fit_logistic(design_matrix(X, true), r);
}

}  // namespace twophase
