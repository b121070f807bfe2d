#ifndef AUTOSGP_SVGP_HPP
#define AUTOSGP_SVGP_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "autosgp/errors.hpp"
#include "autosgp/exact_gpr.hpp"
#include "autosgp/inducing.hpp"
#include "autosgp/kernels.hpp"
#include "autosgp/numerics.hpp"

namespace autosgp {

inline double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }
inline double softplus_inverse(double v) { return v > 30.0 ? v : std::log(std::expm1(v)); }
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// Uncollapsed variational GP with q(u) = N(mean, F F^T). The factor F is
/// stored with its diagonal in softplus space so it stays strictly positive.
struct SvgpParams {
  Eigen::MatrixXd inducing;
  Eigen::VectorXd mean;
  Eigen::MatrixXd factor_raw;  // lower triangle used; diagonal is softplus^{-1}(F_ii)
  KernelSpec kernel;
  double noise_variance = 0.1;

  /// m = 0 and F = I.
  static SvgpParams initial(const Eigen::MatrixXd& z, const KernelSpec& kernel, double noise) {
    const Eigen::Index m = z.rows();
    SvgpParams p{z, Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Zero(m, m), kernel, noise};
    p.factor_raw.diagonal().setConstant(softplus_inverse(1.0));
    return p;
  }

  [[nodiscard]] Eigen::Index num_inducing() const { return inducing.rows(); }

  [[nodiscard]] Eigen::MatrixXd factor() const {
    Eigen::MatrixXd f = factor_raw.triangularView<Eigen::StrictlyLower>();
    for (Eigen::Index i = 0; i < f.rows(); ++i) f(i, i) = softplus(factor_raw(i, i));
    return f;
  }

  void set_factor(const Eigen::MatrixXd& lower) {
    factor_raw = lower.triangularView<Eigen::StrictlyLower>();
    for (Eigen::Index i = 0; i < lower.rows(); ++i) factor_raw(i, i) = softplus_inverse(lower(i, i));
  }

  [[nodiscard]] Eigen::MatrixXd covariance() const {
    const Eigen::MatrixXd f = factor();
    return f * f.transpose();
  }
};

struct SvgpGradient {
  Eigen::MatrixXd inducing;
  Eigen::VectorXd mean;
  Eigen::MatrixXd factor_raw;  // lower triangle
  Eigen::VectorXd hyper;       // unconstrained kernel hyperparameters then noise
};

/// KL[q(u) || p(u)] between M-dimensional Gaussians.
inline double svgp_kl(const SvgpParams& p, const JitterPolicy& policy = {}) {
  CholFactor kzz;
  try {
    kzz = jittered_cholesky(gram(p.kernel, p.inducing), policy);
  } catch (const PositiveDefiniteFailure& e) {
    throw NonFiniteObjective(e.what());
  }
  const Eigen::MatrixXd f = p.factor();
  const double m = static_cast<double>(p.num_inducing());
  const double trace = kzz.solve_lower(f).squaredNorm();
  const double maha = kzz.solve_lower(p.mean).squaredNorm();
  const double log_det_s = 2.0 * f.diagonal().array().log().sum();
  return 0.5 * (trace + maha - m + log_det(kzz) - log_det_s);
}

namespace detail {

struct SvgpMarginals {
  CholFactor kzz;
  Eigen::MatrixXd kzb;   // K(Z, X_B)
  Eigen::MatrixXd proj;  // K_ZZ^{-1} K(Z, X_B)
  Eigen::VectorXd mu;
  Eigen::VectorXd var;
  Eigen::MatrixXd f;
};

inline SvgpMarginals svgp_marginals(const SvgpParams& p, const Eigen::MatrixXd& xb, const JitterPolicy& policy) {
  SvgpMarginals out;
  try {
    out.kzz = jittered_cholesky(gram(p.kernel, p.inducing), policy);
  } catch (const PositiveDefiniteFailure& e) {
    throw NonFiniteObjective(e.what());
  }
  out.kzb = gram(p.kernel, p.inducing, xb);
  out.proj = out.kzz.solve(out.kzb);
  out.f = p.factor();
  out.mu = out.proj.transpose() * p.mean;
  const Eigen::MatrixXd ftp = out.f.transpose() * out.proj;
  out.var = gram_diag(p.kernel, xb) - out.kzb.cwiseProduct(out.proj).colwise().sum().transpose() +
            ftp.colwise().squaredNorm().transpose();
  return out;
}

}  // namespace detail

/// scale * sum_{i in B} E_q[log N(y_i | f_i, noise)] - KL[q(u) || p(u)].
inline double svgp_elbo_minibatch(const SvgpParams& p, const Eigen::MatrixXd& xb, const Eigen::VectorXd& yb,
                                  double scale, const JitterPolicy& policy = {}) {
  const detail::SvgpMarginals mg = detail::svgp_marginals(p, xb, policy);
  const double s = p.noise_variance;
  double ell = 0.0;
  for (Eigen::Index i = 0; i < yb.size(); ++i) {
    const double r = yb[i] - mg.mu[i];
    ell += -0.5 * (kLog2Pi + std::log(s)) - (r * r + mg.var[i]) / (2.0 * s);
  }
  const double value = scale * ell - svgp_kl(p, policy);
  if (!std::isfinite(value)) throw NonFiniteObjective("SVGP ELBO is not finite");
  return value;
}

/// Minibatch ELBO and its gradient with respect to every SVGP parameter.
inline double svgp_elbo_with_gradient(const SvgpParams& p, const Eigen::MatrixXd& xb, const Eigen::VectorXd& yb,
                                      double scale, SvgpGradient& grad, const JitterPolicy& policy = {}) {
  const detail::SvgpMarginals mg = detail::svgp_marginals(p, xb, policy);
  const CholFactor& kzz = mg.kzz;
  const Eigen::Index m = p.num_inducing();
  const double s = p.noise_variance;
  const Eigen::MatrixXd& f = mg.f;
  const Eigen::MatrixXd cov = f * f.transpose();
  const Eigen::MatrixXd k_inv = kzz.inverse();

  const Eigen::VectorXd resid = yb - mg.mu;
  double ell = 0.0;
  for (Eigen::Index i = 0; i < yb.size(); ++i) {
    ell += -0.5 * (kLog2Pi + std::log(s)) - (resid[i] * resid[i] + mg.var[i]) / (2.0 * s);
  }
  const double kl = 0.5 * ((k_inv.cwiseProduct(cov)).sum() + p.mean.dot(k_inv * p.mean) - static_cast<double>(m) +
                           log_det(kzz) - 2.0 * f.diagonal().array().log().sum());
  const double value = scale * ell - kl;
  if (!std::isfinite(value)) throw NonFiniteObjective("SVGP ELBO is not finite");

  // Sensitivities of the data term to the marginal means and variances.
  const Eigen::VectorXd r = scale * resid / s;
  const double q = -scale / (2.0 * s);
  const Eigen::VectorXd k_inv_m = k_inv * p.mean;

  grad.mean = mg.proj * r - k_inv_m;
  const Eigen::MatrixXd g_proj = p.mean * r.transpose() + q * (2.0 * cov * mg.proj - mg.kzb);
  const Eigen::MatrixXd g_kzb = -q * mg.proj + k_inv * g_proj;
  Eigen::MatrixXd g_kzz = -k_inv * g_proj * mg.proj.transpose();
  g_kzz = 0.5 * (g_kzz + g_kzz.transpose()).eval();
  g_kzz += 0.5 * (k_inv * (cov + p.mean * p.mean.transpose()) * k_inv - k_inv);
  const Eigen::MatrixXd g_cov = q * mg.proj * mg.proj.transpose() - 0.5 * k_inv;

  Eigen::MatrixXd g_f = 2.0 * g_cov * f;
  g_f = g_f.triangularView<Eigen::Lower>();
  for (Eigen::Index i = 0; i < m; ++i) {
    g_f(i, i) += 1.0 / f(i, i);
    g_f(i, i) *= sigmoid(p.factor_raw(i, i));
  }
  grad.factor_raw = g_f;

  const Eigen::Index nh = p.kernel.num_hyper();
  grad.hyper.resize(nh + 1);
  grad.hyper.head(nh) = contract_hyper_derivatives(p.kernel, p.inducing, p.inducing, g_kzz) +
                        contract_hyper_derivatives(p.kernel, p.inducing, xb, g_kzb) +
                        contract_diag_hyper_derivatives(p.kernel, xb, Eigen::VectorXd::Constant(xb.rows(), q));
  const double g_noise = scale * ((resid.array().square() + mg.var.array()).sum() / (2.0 * s * s) -
                                  0.5 * static_cast<double>(yb.size()) / s);
  grad.hyper[nh] = g_noise * constrain_derivative(s);

  grad.inducing = 2.0 * contract_input_derivatives(p.kernel, p.inducing, p.inducing, g_kzz) +
                  contract_input_derivatives(p.kernel, p.inducing, xb, g_kzb);
  return value;
}

/// Predictive marginals: mean = k_*Z K^{-1} m,
/// var = k_** - k_*Z K^{-1} (K - S) K^{-1} k_Z*.
inline Prediction svgp_predict(const SvgpParams& p, const Eigen::MatrixXd& x_star, const JitterPolicy& policy = {}) {
  Prediction out;
  if (x_star.rows() == 0) {
    out.mean.resize(0);
    out.latent_variance.resize(0);
    out.observation_variance.resize(0);
    return out;
  }
  const detail::SvgpMarginals mg = detail::svgp_marginals(p, x_star, policy);
  out.mean = mg.mu;
  out.latent_variance = mg.var;
  detail::clamp_variances(out.latent_variance, gram_diag(p.kernel, x_star));
  out.observation_variance = out.latent_variance.array() + p.noise_variance;
  return out;
}

/// The q(u) that maximizes the full-batch ELBO for fixed Z and
/// hyperparameters: S = K (K + K_ZX K_XZ / s)^{-1} K, m = S-weighted data fit.
/// At this q the uncollapsed ELBO equals the collapsed one.
inline SvgpParams optimal_variational(const Eigen::MatrixXd& z, const KernelSpec& kernel, double noise,
                                      const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const JitterPolicy& policy = {}) {
  SvgpParams p = SvgpParams::initial(z, kernel, noise);
  CholFactor kzz;
  try {
    kzz = jittered_cholesky(gram(kernel, z), policy);
  } catch (const PositiveDefiniteFailure& e) {
    throw NonFiniteObjective(e.what());
  }
  const double sigma = std::sqrt(noise);
  const Eigen::MatrixXd a = kzz.solve_lower(gram(kernel, z, x)) / sigma;
  Eigen::MatrixXd b = a * a.transpose();
  b.diagonal().array() += 1.0;
  const CholFactor bf = jittered_cholesky(b, policy);
  // S = L B^{-1} L^T, m = L B^{-1} A y / sigma
  p.mean = kzz.lower * bf.solve(a * y) / sigma;
  const Eigen::MatrixXd half = kzz.lower * bf.solve_upper(Eigen::MatrixXd::Identity(z.rows(), z.rows()));
  p.set_factor(jittered_cholesky(half * half.transpose(), policy).lower);
  return p;
}

struct SvgpTrainConfig {
  /// 0 selects min(N, 10000).
  Eigen::Index batch_size = 0;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int total_steps = 20000;
  bool use_scheduler = true;
  int scheduler_patience = 10;
  double scheduler_factor = 0.95;
  double scheduler_threshold = 0.0;
  double min_learning_rate = 1e-6;
  bool train_inducing = true;
  bool train_hyperparameters = true;
  std::uint64_t seed = 0;
  JitterPolicy jitter{};

  void validate(Eigen::Index n) const {
    const Eigen::Index b = batch_size == 0 ? std::min<Eigen::Index>(n, 10000) : batch_size;
    if (b < 1 || b > n) throw std::invalid_argument("SvgpTrainConfig: need 1 <= batch_size <= N");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("SvgpTrainConfig: learning rate must be positive");
    if (total_steps < 1) throw std::invalid_argument("SvgpTrainConfig: need at least one step");
  }
};

/// Reduce-on-plateau for a quantity being maximized, counted in epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor, double threshold, double min_lr)
      : lr_(lr), patience_(patience), factor_(factor), threshold_(threshold), min_lr_(min_lr) {}

  double step(double value) {
    if (value > best_ * (best_ >= 0.0 ? 1.0 + threshold_ : 1.0 - threshold_)) {
      best_ = value;
      bad_epochs_ = 0;
    } else if (++bad_epochs_ > patience_) {
      lr_ = std::max(lr_ * factor_, min_lr_);
      bad_epochs_ = 0;
    }
    return lr_;
  }
  [[nodiscard]] double learning_rate() const { return lr_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double threshold_;
  double min_lr_;
  double best_ = -std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

struct SvgpEpochInfo {
  int epoch = 0;
  int steps_done = 0;
  double full_elbo = 0.0;
  double learning_rate = 0.0;
};

struct SvgpTrainResult {
  SvgpParams params;
  std::vector<double> step_elbo;   // minibatch estimate per step
  std::vector<double> epoch_elbo;  // full-data ELBO per epoch
  std::vector<double> epoch_learning_rate;
  int skipped_steps = 0;
};

namespace detail {

inline Eigen::Index svgp_param_count(const SvgpParams& p) {
  const Eigen::Index m = p.num_inducing();
  return p.inducing.size() + m + m * (m + 1) / 2 + p.kernel.num_hyper() + 1;
}

inline Eigen::VectorXd flatten(const SvgpParams& p) {
  Eigen::VectorXd v(svgp_param_count(p));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < p.inducing.rows(); ++i)
    for (Eigen::Index d = 0; d < p.inducing.cols(); ++d) v[k++] = p.inducing(i, d);
  for (Eigen::Index i = 0; i < p.mean.size(); ++i) v[k++] = p.mean[i];
  for (Eigen::Index j = 0; j < p.factor_raw.cols(); ++j)
    for (Eigen::Index i = j; i < p.factor_raw.rows(); ++i) v[k++] = p.factor_raw(i, j);
  const HyperVector h = pack(p.kernel, p.noise_variance);
  v.tail(h.values.size()) = h.values;
  return v;
}

inline Eigen::VectorXd flatten(const SvgpGradient& g, const SvgpParams& layout) {
  Eigen::VectorXd v(svgp_param_count(layout));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < g.inducing.rows(); ++i)
    for (Eigen::Index d = 0; d < g.inducing.cols(); ++d) v[k++] = g.inducing(i, d);
  for (Eigen::Index i = 0; i < g.mean.size(); ++i) v[k++] = g.mean[i];
  for (Eigen::Index j = 0; j < g.factor_raw.cols(); ++j)
    for (Eigen::Index i = j; i < g.factor_raw.rows(); ++i) v[k++] = g.factor_raw(i, j);
  v.tail(g.hyper.size()) = g.hyper;
  return v;
}

inline void unflatten(const Eigen::VectorXd& v, SvgpParams& p) {
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < p.inducing.rows(); ++i)
    for (Eigen::Index d = 0; d < p.inducing.cols(); ++d) p.inducing(i, d) = v[k++];
  for (Eigen::Index i = 0; i < p.mean.size(); ++i) p.mean[i] = v[k++];
  for (Eigen::Index j = 0; j < p.factor_raw.cols(); ++j)
    for (Eigen::Index i = j; i < p.factor_raw.rows(); ++i) p.factor_raw(i, j) = v[k++];
  const Hyperparameters h = unpack(p.kernel, HyperVector{v.tail(p.kernel.num_hyper() + 1)});
  p.kernel = h.kernel;
  p.noise_variance = h.noise_variance;
}

}  // namespace detail

/// Adam on all SVGP parameters with per-epoch reduce-on-plateau keyed to the
/// full-data ELBO. Steps with a non-finite objective leave the parameters
/// unchanged; more than 10% skipped steps is a TrainingFailure.
inline SvgpTrainResult train_svgp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SvgpParams& init,
                                  const SvgpTrainConfig& cfg,
                                  const std::function<void(const SvgpEpochInfo&, const SvgpParams&)>& on_epoch = {}) {
  const Eigen::Index n = x.rows();
  cfg.validate(n);
  const Eigen::Index batch = cfg.batch_size == 0 ? std::min<Eigen::Index>(n, 10000) : cfg.batch_size;

  SvgpTrainResult res;
  res.params = init;
  Eigen::VectorXd theta = detail::flatten(res.params);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  const Eigen::Index z_len = res.params.inducing.size();
  const Eigen::Index hyper_len = res.params.kernel.num_hyper() + 1;
  PlateauScheduler sched(cfg.learning_rate, cfg.scheduler_patience, cfg.scheduler_factor, cfg.scheduler_threshold,
                         cfg.min_learning_rate);
  double lr = cfg.learning_rate;

  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const int max_skipped = cfg.total_steps / 10;

  int step = 0;
  int epoch = 0;
  int adam_t = 0;
  SvgpGradient grad;
  while (step < cfg.total_steps) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n && step < cfg.total_steps; start += batch, ++step) {
      const Eigen::Index len = std::min(batch, n - start);
      Eigen::MatrixXd xb(len, x.cols());
      Eigen::VectorXd yb(len);
      for (Eigen::Index r = 0; r < len; ++r) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = x.row(src);
        yb[r] = y[src];
      }
      double value = 0.0;
      bool ok = true;
      try {
        value = svgp_elbo_with_gradient(res.params, xb, yb, static_cast<double>(n) / static_cast<double>(len), grad,
                                        cfg.jitter);
      } catch (const NonFiniteObjective&) {
        ok = false;
      }
      Eigen::VectorXd g;
      if (ok) {
        g = -detail::flatten(grad, res.params);
        ok = g.allFinite();
      }
      if (!ok) {
        res.step_elbo.push_back(std::numeric_limits<double>::quiet_NaN());
        if (++res.skipped_steps > max_skipped) {
          throw TrainingFailure("SVGP training skipped more than 10% of steps");
        }
        continue;
      }
      if (!cfg.train_inducing) g.head(z_len).setZero();
      if (!cfg.train_hyperparameters) g.tail(hyper_len).setZero();
      res.step_elbo.push_back(value);
      ++adam_t;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.beta1, adam_t);
      const double c2 = 1.0 - std::pow(cfg.beta2, adam_t);
      theta.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.adam_epsilon);
      detail::unflatten(theta, res.params);
    }
    ++epoch;
    double full = std::numeric_limits<double>::quiet_NaN();
    try {
      full = svgp_elbo_minibatch(res.params, x, y, 1.0, cfg.jitter);
    } catch (const NonFiniteObjective&) {
    }
    if (cfg.use_scheduler && std::isfinite(full)) lr = sched.step(full);
    res.epoch_elbo.push_back(full);
    res.epoch_learning_rate.push_back(lr);
    if (on_epoch) on_epoch({epoch, step, full, lr}, res.params);
  }
  return res;
}

/// Greedy-variance inducing inputs with m = 0 and F = I.
inline SvgpParams initial_svgp_params(const Eigen::MatrixXd& x, const KernelSpec& kernel, double noise, Eigen::Index m) {
  const SelectionResult sel = greedy_variance_select(x, kernel, m);
  return SvgpParams::initial(take_rows(x, sel.indices), kernel, noise);
}

}  // namespace autosgp

#endif  // AUTOSGP_SVGP_HPP
