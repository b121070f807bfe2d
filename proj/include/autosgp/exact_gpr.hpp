#ifndef AUTOSGP_EXACT_GPR_HPP
#define AUTOSGP_EXACT_GPR_HPP

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "autosgp/errors.hpp"
#include "autosgp/kernels.hpp"
#include "autosgp/numerics.hpp"
#include "autosgp/optimizer.hpp"

namespace autosgp {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Predictive marginals at a set of test inputs.
struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd latent_variance;
  Eigen::VectorXd observation_variance;
};

namespace detail {

// Clamps rounding-level negative variances to zero; anything larger is a bug.
inline void clamp_variances(Eigen::VectorXd& var, const Eigen::VectorXd& prior) {
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (var[i] >= 0.0) continue;
    if (var[i] < -1e-10 * std::max(1.0, prior[i]) || !std::isfinite(var[i])) {
      throw InternalConsistencyError("predictive variance " + std::to_string(var[i]) + " is negative");
    }
    var[i] = 0.0;
  }
}

inline void check_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() < 1 || x.rows() != y.size()) throw std::invalid_argument("need N >= 1 inputs matching the targets");
  if (!y.allFinite() || !x.allFinite()) throw std::invalid_argument("training data must be finite");
}

}  // namespace detail

/// Fitted exact GP: factor of K + noise I and alpha = (K + noise I)^{-1} y.
struct GprPosterior {
  CholFactor chol;
  Eigen::VectorXd alpha;
  Eigen::MatrixXd x_train;
  Hyperparameters hyper;
};

inline GprPosterior fit_gpr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& spec,
                            double noise_variance, const JitterPolicy& policy = {}) {
  detail::check_data(x, y);
  Eigen::MatrixXd k = gram(spec, x);
  k.diagonal().array() += noise_variance;
  GprPosterior post;
  try {
    post.chol = jittered_cholesky(k, policy);
  } catch (const PositiveDefiniteFailure& e) {
    throw NonFiniteObjective(e.what());
  }
  post.alpha = post.chol.solve(y);
  post.x_train = x;
  post.hyper = {spec, noise_variance};
  return post;
}

/// log N(y | 0, K + noise I).
inline double lml(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& spec, double noise_variance,
                  const JitterPolicy& policy = {}) {
  const GprPosterior post = fit_gpr(x, y, spec, noise_variance, policy);
  const double n = static_cast<double>(y.size());
  const double value = -0.5 * n * kLog2Pi - 0.5 * y.dot(post.alpha) - 0.5 * log_det(post.chol);
  if (!std::isfinite(value)) throw NonFiniteObjective("lml is not finite");
  return value;
}

struct ValueAndGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// LML and its gradient with respect to the unconstrained hyperparameters.
/// `layout` fixes the kernel family and dimension; `hv` holds the values.
inline ValueAndGradient lml_with_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                          const KernelSpec& layout, const HyperVector& hv,
                                          const JitterPolicy& policy = {}) {
  const Hyperparameters h = unpack(layout, hv);
  const GprPosterior post = fit_gpr(x, y, h.kernel, h.noise_variance, policy);
  const double n = static_cast<double>(y.size());
  ValueAndGradient out;
  out.value = -0.5 * n * kLog2Pi - 0.5 * y.dot(post.alpha) - 0.5 * log_det(post.chol);
  if (!std::isfinite(out.value)) throw NonFiniteObjective("lml is not finite");

  // dLML/du = 1/2 tr(W dK/du) with W = alpha alpha^T - (K + noise I)^{-1}.
  const Eigen::MatrixXd w = post.alpha * post.alpha.transpose() - post.chol.inverse();
  out.gradient.resize(hv.values.size());
  out.gradient.head(h.kernel.num_hyper()) = 0.5 * contract_hyper_derivatives(h.kernel, x, x, w);
  out.gradient[h.kernel.num_hyper()] = 0.5 * w.trace() * constrain_derivative(h.noise_variance);
  if (!out.gradient.allFinite()) throw NonFiniteObjective("lml gradient is not finite");
  return out;
}

inline Eigen::VectorXd lml_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& layout,
                                    const HyperVector& hv, const JitterPolicy& policy = {}) {
  return lml_with_gradient(x, y, layout, hv, policy).gradient;
}

inline Prediction gpr_predict(const GprPosterior& post, const Eigen::MatrixXd& x_star) {
  Prediction p;
  const Eigen::Index m = x_star.rows();
  if (m == 0) {
    p.mean.resize(0);
    p.latent_variance.resize(0);
    p.observation_variance.resize(0);
    return p;
  }
  const KernelSpec& spec = post.hyper.kernel;
  const Eigen::MatrixXd k_xs = gram(spec, post.x_train, x_star);
  p.mean = k_xs.transpose() * post.alpha;
  const Eigen::MatrixXd v = post.chol.solve_lower(k_xs);
  const Eigen::VectorXd prior = gram_diag(spec, x_star);
  p.latent_variance = prior - v.colwise().squaredNorm().transpose();
  detail::clamp_variances(p.latent_variance, prior);
  p.observation_variance = p.latent_variance.array() + post.hyper.noise_variance;
  return p;
}

struct GprTrainResult {
  GprPosterior posterior;
  double lml = 0.0;
  OptResult opt;
};

/// Maximizes the LML over the unconstrained hyperparameters from the given start.
inline GprTrainResult train_gpr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& initial_kernel,
                                double initial_noise, const LbfgsConfig& cfg = {}, const JitterPolicy& policy = {}) {
  detail::check_data(x, y);
  const Objective objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    const ValueAndGradient vg = lml_with_gradient(x, y, initial_kernel, HyperVector{u}, policy);
    grad = -vg.gradient;
    return -vg.value;
  };
  GprTrainResult res;
  res.opt = minimize(objective, pack(initial_kernel, initial_noise).values, cfg);
  const Hyperparameters h = unpack(initial_kernel, HyperVector{res.opt.x_final});
  res.posterior = fit_gpr(x, y, h.kernel, h.noise_variance, policy);
  res.lml = -res.opt.f_final;
  return res;
}

}  // namespace autosgp

#endif  // AUTOSGP_EXACT_GPR_HPP
