#ifndef AUTOSGP_HARNESS_METRICS_HPP
#define AUTOSGP_HARNESS_METRICS_HPP

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "autosgp/exact_gpr.hpp"

namespace autosgp::harness {

class LengthMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonPositiveVariance : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& y) {
  if (pred.size() != y.size() || y.size() < 1) {
    throw LengthMismatch("rmse: expected equal non-empty vectors, got " + std::to_string(pred.size()) + " and " +
                         std::to_string(y.size()));
  }
  return std::sqrt((pred - y).squaredNorm() / static_cast<double>(y.size()));
}

/// Mean negative log density of y under independent N(mean_i, var_i).
inline double nlpd(const Eigen::VectorXd& mean, const Eigen::VectorXd& var, const Eigen::VectorXd& y) {
  if (mean.size() != y.size() || var.size() != y.size() || y.size() < 1) {
    throw LengthMismatch("nlpd: expected equal non-empty vectors");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(var[i] > 0.0)) throw NonPositiveVariance("nlpd: variance " + std::to_string(var[i]) + " at index " + std::to_string(i));
    const double r = y[i] - mean[i];
    total += 0.5 * (kLog2Pi + std::log(var[i])) + r * r / (2.0 * var[i]);
  }
  return total / static_cast<double>(y.size());
}

/// Outcome of a closed-form baseline fit.
struct BaselineFit {
  double train_log_likelihood = 0.0;
  double rmse = 0.0;
  double nlpd = 0.0;
  double noise_variance = 0.0;
  std::string note;
};

/// Ordinary least squares with intercept and maximum-likelihood noise
/// variance. Rank-deficient designs fall back to a 1e-8 ridge.
inline BaselineFit linear_baseline(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
                                   const Eigen::MatrixXd& x_test, const Eigen::VectorXd& y_test) {
  const Eigen::Index n = x_train.rows();
  Eigen::MatrixXd design(n, x_train.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x_train.cols()) = x_train;

  BaselineFit fit;
  Eigen::VectorXd beta;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() == design.cols()) {
    beta = qr.solve(y_train);
  } else {
    Eigen::MatrixXd gram = design.transpose() * design;
    gram.diagonal().array() += 1e-8;
    beta = gram.ldlt().solve(design.transpose() * y_train);
    fit.note = "singular design: ridge fallback (1e-8)";
  }
  const Eigen::VectorXd resid = y_train - design * beta;
  // Floor keeps the density proper for exactly linear data.
  fit.noise_variance = std::max(resid.squaredNorm() / static_cast<double>(n), 1e-12);
  fit.train_log_likelihood =
      -0.5 * static_cast<double>(n) * (kLog2Pi + std::log(fit.noise_variance)) - 0.5 * resid.squaredNorm() / fit.noise_variance;

  Eigen::MatrixXd test_design(x_test.rows(), x_test.cols() + 1);
  test_design.col(0).setOnes();
  test_design.rightCols(x_test.cols()) = x_test;
  const Eigen::VectorXd pred = test_design * beta;
  fit.rmse = rmse(pred, y_test);
  fit.nlpd = nlpd(pred, Eigen::VectorXd::Constant(pred.size(), fit.noise_variance), y_test);
  return fit;
}

/// Training mean with training variance.
inline BaselineFit constant_baseline(const Eigen::VectorXd& y_train, const Eigen::VectorXd& y_test) {
  const double n = static_cast<double>(y_train.size());
  const double mu = y_train.mean();
  BaselineFit fit;
  fit.noise_variance = std::max((y_train.array() - mu).square().sum() / n, 1e-12);
  fit.train_log_likelihood = -0.5 * n * (kLog2Pi + std::log(fit.noise_variance)) -
                             0.5 * (y_train.array() - mu).square().sum() / fit.noise_variance;
  const Eigen::VectorXd pred = Eigen::VectorXd::Constant(y_test.size(), mu);
  fit.rmse = rmse(pred, y_test);
  fit.nlpd = nlpd(pred, Eigen::VectorXd::Constant(y_test.size(), fit.noise_variance), y_test);
  return fit;
}

}  // namespace autosgp::harness

#endif  // AUTOSGP_HARNESS_METRICS_HPP
