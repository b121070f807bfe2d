#ifndef AUTOSGP_SGPR_HPP
#define AUTOSGP_SGPR_HPP

#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "autosgp/errors.hpp"
#include "autosgp/exact_gpr.hpp"
#include "autosgp/kernels.hpp"
#include "autosgp/numerics.hpp"

namespace autosgp {

/// Collapsed sparse variational GP: inducing inputs plus hyperparameters.
struct SgprModel {
  Eigen::MatrixXd inducing;
  KernelSpec kernel;
  double noise_variance = 0.01;
};

struct BoundReport {
  double elbo = 0.0;
  double upper_bound = 0.0;
  double trace = 0.0;  // guarded tr(K_XX - Q_XX)
  double kl_gap_bound = 0.0;
};

/// Numerical knobs shared by the bound computations.
struct BoundOptions {
  JitterPolicy jitter{};
  /// Negative traces down to -trace_tolerance * tr(K_XX) count as rounding.
  double trace_tolerance = 1e-6;
  /// Index of the first jitter attempt used for K_ZZ (0 = jitter-free).
  int first_jitter_attempt = 0;
};

/// tr(K_XX - Q_XX) with rounding-level negatives clamped to zero. Returns NaN
/// when the negative excess is too large to be rounding.
inline double guarded_trace(double k_diag_sum, double q_diag_sum, double k_scale, double rel_tol = 1e-6) {
  const double t = k_diag_sum - q_diag_sum;
  if (t >= 0.0) return t;
  if (t >= -rel_tol * k_scale) return 0.0;
  return std::numeric_limits<double>::quiet_NaN();
}

namespace detail {

// Everything the bounds, predictions and gradients share. With
// L = chol(K_ZZ), A = L^{-1} K_ZX / sigma, B = I + A A^T = L_B L_B^T and
// c = L_B^{-1} A y / sigma:
//   log|Q + s I| = N log s + log|B|
//   y^T (Q + s I)^{-1} y = y^T y / s - c^T c
struct SgprTerms {
  CholFactor kzz;
  CholFactor b;
  Eigen::MatrixXd kzx;
  Eigen::MatrixXd a;
  Eigen::MatrixXd aat;
  Eigen::VectorXd c;
  Eigen::VectorXd kdiag;
  double noise = 0.0;
  double yty = 0.0;
  double trace = 0.0;
  bool trace_clamped = false;
  double elbo = 0.0;
};

inline SgprTerms sgpr_terms(const SgprModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const BoundOptions& opt) {
  check_data(x, y);
  if (model.inducing.rows() < 1) throw std::invalid_argument("SGPR needs at least one inducing point");
  SgprTerms t;
  const double s = model.noise_variance;
  const double sigma = std::sqrt(s);
  t.noise = s;
  try {
    t.kzz = jittered_cholesky(gram(model.kernel, model.inducing), opt.jitter, opt.first_jitter_attempt);
    t.kzx = gram(model.kernel, model.inducing, x);
    t.a = t.kzz.solve_lower(t.kzx) / sigma;
    t.aat = t.a * t.a.transpose();
    Eigen::MatrixXd bmat = t.aat;
    bmat.diagonal().array() += 1.0;
    t.b = jittered_cholesky(bmat, opt.jitter);
  } catch (const PositiveDefiniteFailure& e) {
    throw NonFiniteObjective(e.what());
  }
  t.c = t.b.solve_lower(t.a * y) / sigma;
  t.kdiag = gram_diag(model.kernel, x);
  t.yty = y.squaredNorm();

  const double k_sum = t.kdiag.sum();
  const double q_sum = s * t.aat.trace();
  t.trace = guarded_trace(k_sum, q_sum, k_sum, opt.trace_tolerance);
  if (std::isnan(t.trace)) throw NonFiniteObjective("trace term tr(K - Q) is significantly negative");
  t.trace_clamped = t.trace == 0.0 && k_sum - q_sum < 0.0;

  const double n = static_cast<double>(y.size());
  const double log_det_q = n * std::log(s) + log_det(t.b);
  const double quad = t.yty / s - t.c.squaredNorm();
  t.elbo = -0.5 * n * kLog2Pi - 0.5 * log_det_q - 0.5 * quad - 0.5 * t.trace / s;
  if (!std::isfinite(t.elbo)) throw NonFiniteObjective("ELBO is not finite");
  return t;
}

inline double upper_bound_from_terms(const SgprTerms& t, const Eigen::VectorXd& y) {
  const double n = static_cast<double>(y.size());
  const double s = t.noise;
  const double log_det_q = n * std::log(s) + log_det(t.b);
  // Same Woodbury route with the inflated noise s' = s + t.
  const double s_up = s + t.trace;
  const double ratio = s / s_up;
  Eigen::MatrixXd bmat = ratio * t.aat;
  bmat.diagonal().array() += 1.0;
  CholFactor b_up;
  try {
    b_up = jittered_cholesky(bmat);
  } catch (const PositiveDefiniteFailure& e) {
    throw NonFiniteObjective(e.what());
  }
  const Eigen::VectorXd c_up = b_up.solve_lower(t.a * y) * (std::sqrt(s) / s_up);
  const double quad = t.yty / s_up - c_up.squaredNorm();
  const double ub = -0.5 * n * kLog2Pi - 0.5 * quad - 0.5 * log_det_q;
  if (!std::isfinite(ub)) throw NonFiniteObjective("upper bound is not finite");
  return ub;
}

}  // namespace detail

/// Collapsed evidence lower bound; O(N M^2 + M^3), no N x N matrices.
inline double elbo(const SgprModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                   const BoundOptions& opt = {}) {
  return detail::sgpr_terms(model, x, y, opt).elbo;
}

/// Upper bound on the log marginal likelihood, same cost as the ELBO.
inline double upper_bound(const SgprModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const BoundOptions& opt = {}) {
  const detail::SgprTerms t = detail::sgpr_terms(model, x, y, opt);
  return detail::upper_bound_from_terms(t, y);
}

inline BoundReport bound_report(const SgprModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const BoundOptions& opt = {}) {
  const detail::SgprTerms t = detail::sgpr_terms(model, x, y, opt);
  BoundReport r;
  r.elbo = t.elbo;
  r.upper_bound = detail::upper_bound_from_terms(t, y);
  r.trace = t.trace;
  r.kl_gap_bound = r.upper_bound - r.elbo;
  return r;
}

/// upper_bound - elbo: bounds KL from the approximate to the exact posterior.
inline double kl_gap_bound(const SgprModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const BoundOptions& opt = {}) {
  return bound_report(model, x, y, opt).kl_gap_bound;
}

/// ELBO and its gradient with respect to the unconstrained kernel and noise
/// hyperparameters; the inducing inputs stay fixed.
inline ValueAndGradient elbo_with_gradient(const Eigen::MatrixXd& inducing, const KernelSpec& layout,
                                           const HyperVector& hv, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           const BoundOptions& opt = {}) {
  const Hyperparameters h = unpack(layout, hv);
  const SgprModel model{inducing, h.kernel, h.noise_variance};
  const detail::SgprTerms t = detail::sgpr_terms(model, x, y, opt);
  const double s = t.noise;
  const double sigma = std::sqrt(s);
  const double n = static_cast<double>(y.size());
  const bool with_trace = !t.trace_clamped;
  const Eigen::Index m = t.a.rows();

  const Eigen::MatrixXd b_inv = t.b.inverse();
  const Eigen::VectorXd lbc = t.b.solve_upper(t.c);  // L_B^{-T} c
  const Eigen::VectorXd a_lbc = t.a.transpose() * lbc;  // A^T L_B^{-T} c

  // Sensitivities expressed in the whitened frame, then mapped back with L^{-T}.
  Eigen::MatrixXd h_uu = Eigen::MatrixXd::Identity(m, m) - b_inv - lbc * lbc.transpose();
  if (with_trace) h_uu -= t.aat;
  h_uu *= 0.5;
  const Eigen::MatrixXd g_uu = t.kzz.solve_upper(t.kzz.solve_upper(h_uu).transpose());

  Eigen::MatrixXd inner = -b_inv * t.a + lbc * (y.transpose() / sigma) - lbc * a_lbc.transpose();
  if (with_trace) inner += t.a;
  const Eigen::MatrixXd g_uf = t.kzz.solve_upper(inner) / sigma;

  double g_s = 0.5 * ((b_inv.cwiseProduct(t.aat)).sum() + a_lbc.squaredNorm() - n) / s + 0.5 * t.yty / (s * s) -
               t.c.squaredNorm() / s;
  if (with_trace) g_s += 0.5 * (t.kdiag.sum() / s - t.aat.trace()) / s;

  ValueAndGradient out;
  out.value = t.elbo;
  out.gradient.resize(hv.values.size());
  Eigen::VectorXd gk = contract_hyper_derivatives(h.kernel, inducing, inducing, g_uu) +
                       contract_hyper_derivatives(h.kernel, inducing, x, g_uf);
  if (with_trace) {
    gk += contract_diag_hyper_derivatives(h.kernel, x, Eigen::VectorXd::Constant(x.rows(), -0.5 / s));
  }
  out.gradient.head(h.kernel.num_hyper()) = gk;
  out.gradient[h.kernel.num_hyper()] = g_s * constrain_derivative(s);
  if (!out.gradient.allFinite()) throw NonFiniteObjective("ELBO gradient is not finite");
  return out;
}

inline Eigen::VectorXd elbo_gradient(const Eigen::MatrixXd& inducing, const KernelSpec& layout, const HyperVector& hv,
                                     const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                     const BoundOptions& opt = {}) {
  return elbo_with_gradient(inducing, layout, hv, x, y, opt).gradient;
}

/// Predictive marginals of the collapsed posterior, O(N M^2 + M^3 + P M^2).
inline Prediction sgpr_predict(const SgprModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const Eigen::MatrixXd& x_star, const BoundOptions& opt = {}) {
  const detail::SgprTerms t = detail::sgpr_terms(model, x, y, opt);
  Prediction p;
  if (x_star.rows() == 0) {
    p.mean.resize(0);
    p.latent_variance.resize(0);
    p.observation_variance.resize(0);
    return p;
  }
  const Eigen::MatrixXd kzs = gram(model.kernel, model.inducing, x_star);
  const Eigen::MatrixXd tmp1 = t.kzz.solve_lower(kzs);
  const Eigen::MatrixXd tmp2 = t.b.solve_lower(tmp1);
  p.mean = tmp2.transpose() * t.c;
  const Eigen::VectorXd prior = gram_diag(model.kernel, x_star);
  p.latent_variance = prior - tmp1.colwise().squaredNorm().transpose() + tmp2.colwise().squaredNorm().transpose();
  detail::clamp_variances(p.latent_variance, prior);
  p.observation_variance = p.latent_variance.array() + model.noise_variance;
  return p;
}

}  // namespace autosgp

#endif  // AUTOSGP_SGPR_HPP
