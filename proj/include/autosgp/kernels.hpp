#ifndef AUTOSGP_KERNELS_HPP
#define AUTOSGP_KERNELS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "autosgp/errors.hpp"

namespace autosgp {

/// Hard lower limit on every positive hyperparameter (including noise).
inline constexpr double kHyperFloor = 1e-5;

enum class KernelFamily { SquaredExponential, Matern, ArcCosine };

/// Kernel family plus its constrained hyperparameters.
///
/// `order` selects the Matern smoothness as 2*nu (1, 3 or 5) or the
/// arc-cosine order (0, 1 or 2); it is ignored for the squared exponential.
/// `scales` holds per-dimension lengthscales for the stationary families and
/// per-dimension input weight variances for the arc-cosine kernel.
struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  int order = 0;
  double signal_variance = 1.0;
  Eigen::VectorXd scales;
  double bias_variance = 1.0;

  static KernelSpec squared_exponential(Eigen::Index dim, double lengthscale = 1.0, double variance = 1.0) {
    return {KernelFamily::SquaredExponential, 0, variance, Eigen::VectorXd::Constant(dim, lengthscale), 1.0};
  }
  /// `twice_nu` in {1, 3, 5}.
  static KernelSpec matern(int twice_nu, Eigen::Index dim, double lengthscale = 1.0, double variance = 1.0) {
    KernelSpec s{KernelFamily::Matern, twice_nu, variance, Eigen::VectorXd::Constant(dim, lengthscale), 1.0};
    s.validate();
    return s;
  }
  static KernelSpec arc_cosine(int order, Eigen::Index dim, double weight_variance = 1.0, double bias = 1.0,
                               double variance = 1.0) {
    KernelSpec s{KernelFamily::ArcCosine, order, variance, Eigen::VectorXd::Constant(dim, weight_variance), bias};
    s.validate();
    return s;
  }

  [[nodiscard]] Eigen::Index input_dim() const { return scales.size(); }

  /// Number of trainable kernel hyperparameters (noise excluded).
  [[nodiscard]] Eigen::Index num_hyper() const {
    return 1 + scales.size() + (family == KernelFamily::ArcCosine ? 1 : 0);
  }

  void validate() const {
    if (family == KernelFamily::Matern && order != 1 && order != 3 && order != 5) {
      throw std::invalid_argument("Matern kernel supports nu in {1/2, 3/2, 5/2}");
    }
    if (family == KernelFamily::ArcCosine && (order < 0 || order > 2)) {
      throw std::invalid_argument("arc-cosine kernel supports order in {0, 1, 2}");
    }
    if (scales.size() < 1) throw std::invalid_argument("kernel needs at least one input dimension");
    auto bad = [](double v) { return !(v >= kHyperFloor) || !std::isfinite(v); };
    if (bad(signal_variance) || (family == KernelFamily::ArcCosine && bad(bias_variance)) ||
        std::any_of(scales.begin(), scales.end(), bad)) {
      throw std::invalid_argument("kernel hyperparameters must be finite and >= 1e-5");
    }
  }

  [[nodiscard]] std::string name() const {
    switch (family) {
      case KernelFamily::SquaredExponential: return "se";
      case KernelFamily::Matern: return "matern" + std::to_string(order) + "2";
      case KernelFamily::ArcCosine: return "arccos" + std::to_string(order);
    }
    return "unknown";
  }
};

/// Builds a kernel with all hyperparameters at `init` from its CLI name
/// (se, matern12, matern32, matern52, arccos0, arccos1, arccos2).
inline KernelSpec kernel_from_name(const std::string& name, Eigen::Index dim, double init = 1.0) {
  if (name == "se") return KernelSpec::squared_exponential(dim, init, init);
  if (name == "matern12") return KernelSpec::matern(1, dim, init, init);
  if (name == "matern32") return KernelSpec::matern(3, dim, init, init);
  if (name == "matern52") return KernelSpec::matern(5, dim, init, init);
  if (name == "arccos0") return KernelSpec::arc_cosine(0, dim, init, init, init);
  if (name == "arccos1") return KernelSpec::arc_cosine(1, dim, init, init, init);
  if (name == "arccos2") return KernelSpec::arc_cosine(2, dim, init, init, init);
  throw std::invalid_argument("unknown kernel '" + name + "'");
}

// ---------------------------------------------------------------------------
// Constraint transform: raw = floor + exp(u).

inline double constrain(double u) { return kHyperFloor + std::exp(u); }

inline double unconstrain(double raw) {
  if (!(raw > kHyperFloor) || !std::isfinite(raw)) {
    throw PackDomainError("hyperparameter " + std::to_string(raw) + " is not above the 1e-5 floor");
  }
  return std::log(raw - kHyperFloor);
}

/// d raw / d u, expressed through the constrained value.
inline double constrain_derivative(double raw) { return raw - kHyperFloor; }

/// Unconstrained hyperparameters: the kernel's (signal variance, scales...,
/// [bias]) followed by the noise variance.
struct HyperVector {
  Eigen::VectorXd values;
};

struct Hyperparameters {
  KernelSpec kernel;
  double noise_variance = 0.01;
};

inline HyperVector pack(const KernelSpec& spec, double noise_variance) {
  HyperVector v;
  v.values.resize(spec.num_hyper() + 1);
  Eigen::Index k = 0;
  v.values[k++] = unconstrain(spec.signal_variance);
  for (Eigen::Index d = 0; d < spec.scales.size(); ++d) v.values[k++] = unconstrain(spec.scales[d]);
  if (spec.family == KernelFamily::ArcCosine) v.values[k++] = unconstrain(spec.bias_variance);
  v.values[k] = unconstrain(noise_variance);
  return v;
}

inline HyperVector pack(const Hyperparameters& h) { return pack(h.kernel, h.noise_variance); }

/// Inverse of pack. `layout` supplies the family, order and input dimension.
inline Hyperparameters unpack(const KernelSpec& layout, const HyperVector& v) {
  if (v.values.size() != layout.num_hyper() + 1) {
    throw std::invalid_argument("unpack: hyper vector has the wrong length for this kernel");
  }
  Hyperparameters h{layout, 0.0};
  Eigen::Index k = 0;
  h.kernel.signal_variance = constrain(v.values[k++]);
  for (Eigen::Index d = 0; d < h.kernel.scales.size(); ++d) h.kernel.scales[d] = constrain(v.values[k++]);
  if (layout.family == KernelFamily::ArcCosine) h.kernel.bias_variance = constrain(v.values[k++]);
  h.noise_variance = constrain(v.values[k]);
  return h;
}

// ---------------------------------------------------------------------------

namespace detail {

inline double arccos_j(int order, double phi) {
  const double pi = std::numbers::pi;
  const double s = std::sin(phi), c = std::cos(phi);
  switch (order) {
    case 0: return pi - phi;
    case 1: return s + (pi - phi) * c;
    default: return 3.0 * s * c + (pi - phi) * (1.0 + 2.0 * c * c);
  }
}

// dJ/d(cos phi) = -J'(phi) / sin(phi).
inline double arccos_dj_drho(int order, double phi) {
  switch (order) {
    case 0: return 1.0 / std::sin(phi);
    case 1: return std::numbers::pi - phi;
    default: return 4.0 * arccos_j(1, phi);
  }
}

/// Evaluates one kernel entry and, optionally, its partial derivatives with
/// respect to the unconstrained hyperparameters or to the first input.
class PairKernel {
 public:
  explicit PairKernel(const KernelSpec& spec) : spec_(spec) {
    spec_.validate();
    inv_sq_.resize(spec.scales.size());
    for (Eigen::Index d = 0; d < spec.scales.size(); ++d) inv_sq_[d] = 1.0 / (spec.scales[d] * spec.scales[d]);
  }

  [[nodiscard]] const KernelSpec& spec() const { return spec_; }

  /// `x` and `y` point at D contiguous doubles.
  [[nodiscard]] double value(const double* x, const double* y) const {
    if (spec_.family == KernelFamily::ArcCosine) {
      const ArcTerms t = arc_terms(x, y);
      return t.value;
    }
    const double r2 = scaled_sqdist(x, y);
    return stationary_value(r2);
  }

  [[nodiscard]] double diag_value(const double* x) const {
    if (spec_.family == KernelFamily::ArcCosine) {
      // phi = 0 on the diagonal
      const double a = std::max(weighted_inner(x, x), 0.0);
      return spec_.signal_variance * std::pow(a, spec_.order) * arccos_j(spec_.order, 0.0) / std::numbers::pi;
    }
    return spec_.signal_variance;
  }

  /// Adds w * dk/du_p into grad[p] for every kernel hyperparameter p.
  void accumulate_hyper_gradient(const double* x, const double* y, double w, double* grad) const {
    const Eigen::Index dim = spec_.scales.size();
    const double sf2 = spec_.signal_variance;
    if (spec_.family == KernelFamily::ArcCosine) {
      const ArcTerms t = arc_terms(x, y);
      grad[0] += w * t.value / sf2 * constrain_derivative(sf2);
      if (t.degenerate) return;
      for (Eigen::Index d = 0; d < dim; ++d) {
        const double dk = arc_partial(t, x[d] * x[d], y[d] * y[d], x[d] * y[d]);
        grad[1 + d] += w * dk * constrain_derivative(spec_.scales[d]);
      }
      grad[1 + dim] += w * arc_partial(t, 1.0, 1.0, 1.0) * constrain_derivative(spec_.bias_variance);
      return;
    }
    const double r2 = scaled_sqdist(x, y);
    const double k = stationary_value(r2);
    const double h = stationary_h(r2, k);
    grad[0] += w * k / sf2 * constrain_derivative(sf2);
    if (h == 0.0) return;
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double diff = x[d] - y[d];
      const double l = spec_.scales[d];
      grad[1 + d] += w * h * diff * diff * inv_sq_[d] / l * constrain_derivative(l);
    }
  }

  /// Adds w * dk(x, y)/dx_d into grad[d].
  void accumulate_input_gradient(const double* x, const double* y, double w, double* grad) const {
    const Eigen::Index dim = spec_.scales.size();
    if (spec_.family == KernelFamily::ArcCosine) {
      const ArcTerms t = arc_terms(x, y);
      if (t.degenerate) return;
      for (Eigen::Index d = 0; d < dim; ++d) {
        const double wd = spec_.scales[d];
        grad[d] += w * arc_partial(t, 2.0 * wd * x[d], 0.0, wd * y[d]);
      }
      return;
    }
    const double r2 = scaled_sqdist(x, y);
    const double h = stationary_h(r2, stationary_value(r2));
    if (h == 0.0) return;
    for (Eigen::Index d = 0; d < dim; ++d) grad[d] -= w * h * (x[d] - y[d]) * inv_sq_[d];
  }

 private:
  struct ArcTerms {
    double value = 0.0;
    double a = 0.0, c = 0.0, rho = 1.0, phi = 0.0, jn = 0.0, norm_pow = 1.0;
    bool degenerate = false;  // a zero weighted norm; derivatives treated as 0
    bool parallel = false;    // rho clamped to +-1
  };

  [[nodiscard]] double scaled_sqdist(const double* x, const double* y) const {
    double r2 = 0.0;
    for (Eigen::Index d = 0; d < spec_.scales.size(); ++d) {
      const double diff = x[d] - y[d];
      r2 += diff * diff * inv_sq_[d];
    }
    return std::max(r2, 0.0);
  }

  [[nodiscard]] double weighted_inner(const double* x, const double* y) const {
    double s = spec_.bias_variance;
    for (Eigen::Index d = 0; d < spec_.scales.size(); ++d) s += spec_.scales[d] * x[d] * y[d];
    return s;
  }

  [[nodiscard]] double stationary_value(double r2) const {
    const double sf2 = spec_.signal_variance;
    if (spec_.family == KernelFamily::SquaredExponential) return sf2 * std::exp(-0.5 * r2);
    const double r = std::sqrt(r2);
    switch (spec_.order) {
      case 1: return sf2 * std::exp(-r);
      case 3: {
        const double t = std::sqrt(3.0) * r;
        return sf2 * (1.0 + t) * std::exp(-t);
      }
      default: {
        const double t = std::sqrt(5.0) * r;
        return sf2 * (1.0 + t + t * t / 3.0) * std::exp(-t);
      }
    }
  }

  // h(r) = -(1/r) dk/dr, so dk/dl_d = h * diff_d^2 / l_d^3 and
  // dk/dx_d = -h * diff_d / l_d^2.
  [[nodiscard]] double stationary_h(double r2, double k) const {
    if (spec_.family == KernelFamily::SquaredExponential) return k;
    const double sf2 = spec_.signal_variance;
    const double r = std::sqrt(r2);
    switch (spec_.order) {
      case 1: return r > 0.0 ? sf2 * std::exp(-r) / r : 0.0;
      case 3: return 3.0 * sf2 * std::exp(-std::sqrt(3.0) * r);
      default: {
        const double t = std::sqrt(5.0) * r;
        return 5.0 / 3.0 * sf2 * (1.0 + t) * std::exp(-t);
      }
    }
  }

  [[nodiscard]] ArcTerms arc_terms(const double* x, const double* y) const {
    ArcTerms t;
    const int n = spec_.order;
    const double sf2 = spec_.signal_variance;
    t.a = weighted_inner(x, x);
    t.c = weighted_inner(y, y);
    if (!(t.a > 0.0) || !(t.c > 0.0)) {
      t.degenerate = true;
      t.value = n == 0 ? sf2 : 0.0;
      return t;
    }
    const double s = weighted_inner(x, y);
    const double denom = std::sqrt(t.a * t.c);
    double rho = s / denom;
    if (rho >= 1.0) {
      rho = 1.0;
      t.parallel = true;
    } else if (rho <= -1.0) {
      rho = -1.0;
      t.parallel = true;
    }
    t.rho = rho;
    t.phi = std::acos(rho);
    t.jn = arccos_j(n, t.phi);
    t.norm_pow = n == 0 ? 1.0 : std::pow(denom, n);
    t.value = sf2 / std::numbers::pi * t.norm_pow * t.jn;
    return t;
  }

  // Directional derivative of the arc-cosine kernel given the derivatives of
  // <x,x>, <y,y> and <x,y> along that direction.
  [[nodiscard]] double arc_partial(const ArcTerms& t, double da, double dc, double ds) const {
    const int n = spec_.order;
    const double log_norm_rate = da / t.a + dc / t.c;
    double out = 0.5 * n * t.norm_pow * t.jn * log_norm_rate;
    const bool singular = n == 0 && (t.parallel || std::sin(t.phi) < 1e-12);
    if (!singular) {
      const double drho = ds / std::sqrt(t.a * t.c) - 0.5 * t.rho * log_norm_rate;
      out += t.norm_pow * arccos_dj_drho(n, t.phi) * drho;
    }
    return spec_.signal_variance / std::numbers::pi * out;
  }

  KernelSpec spec_;
  Eigen::VectorXd inv_sq_;
};

// Row-major copy so each point's coordinates are contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void check_dims(const KernelSpec& spec, const Eigen::MatrixXd& x) {
  if (x.cols() != spec.input_dim()) {
    throw std::invalid_argument("input dimension " + std::to_string(x.cols()) + " does not match kernel dimension " +
                                std::to_string(spec.input_dim()));
  }
}

}  // namespace detail

inline double eval_pair(const KernelSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != spec.input_dim() || y.size() != spec.input_dim()) {
    throw std::invalid_argument("eval_pair: dimension mismatch");
  }
  return detail::PairKernel(spec).value(x.data(), y.data());
}

/// Cross-covariance K(X, X2), or the symmetric K(X, X) when X2 is absent.
inline Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& x,
                            const std::optional<Eigen::MatrixXd>& x2 = std::nullopt) {
  detail::check_dims(spec, x);
  const detail::PairKernel k(spec);
  const detail::RowMatrix a = x;
  if (!x2) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      out(j, j) = k.diag_value(a.row(j).data());
      for (Eigen::Index i = j + 1; i < n; ++i) out(i, j) = out(j, i) = k.value(a.row(i).data(), a.row(j).data());
    }
    return out;
  }
  detail::check_dims(spec, *x2);
  const detail::RowMatrix b = *x2;
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) out(i, j) = k.value(a.row(i).data(), b.row(j).data());
  }
  return out;
}

inline Eigen::VectorXd gram_diag(const KernelSpec& spec, const Eigen::MatrixXd& x) {
  detail::check_dims(spec, x);
  const detail::PairKernel k(spec);
  const detail::RowMatrix a = x;
  Eigen::VectorXd out(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) out[i] = k.diag_value(a.row(i).data());
  return out;
}

/// dK/du_p for every unconstrained kernel hyperparameter u_p, in pack order.
inline std::vector<Eigen::MatrixXd> gram_hyper_derivatives(const KernelSpec& spec, const Eigen::MatrixXd& x,
                                                           const std::optional<Eigen::MatrixXd>& x2 = std::nullopt) {
  detail::check_dims(spec, x);
  const detail::PairKernel k(spec);
  const detail::RowMatrix a = x;
  const detail::RowMatrix b = x2 ? detail::RowMatrix(*x2) : a;
  if (x2) detail::check_dims(spec, *x2);
  const Eigen::Index np = spec.num_hyper();
  std::vector<Eigen::MatrixXd> out(np, Eigen::MatrixXd(a.rows(), b.rows()));
  Eigen::VectorXd g(np);
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      g.setZero();
      k.accumulate_hyper_gradient(a.row(i).data(), b.row(j).data(), 1.0, g.data());
      for (Eigen::Index p = 0; p < np; ++p) out[p](i, j) = g[p];
    }
  }
  return out;
}

/// sum_ij W_ij dK(X, X2)_ij / du_p for every kernel hyperparameter, without
/// materializing the derivative matrices.
inline Eigen::VectorXd contract_hyper_derivatives(const KernelSpec& spec, const Eigen::MatrixXd& x,
                                                  const Eigen::MatrixXd& x2, const Eigen::MatrixXd& weights) {
  detail::check_dims(spec, x);
  detail::check_dims(spec, x2);
  if (weights.rows() != x.rows() || weights.cols() != x2.rows()) {
    throw std::invalid_argument("contract_hyper_derivatives: weight shape mismatch");
  }
  const detail::PairKernel k(spec);
  const detail::RowMatrix a = x;
  const detail::RowMatrix b = x2;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(spec.num_hyper());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double w = weights(i, j);
      if (w != 0.0) k.accumulate_hyper_gradient(a.row(i).data(), b.row(j).data(), w, g.data());
    }
  }
  return g;
}

/// sum_i w_i d k(x_i, x_i) / du_p.
inline Eigen::VectorXd contract_diag_hyper_derivatives(const KernelSpec& spec, const Eigen::MatrixXd& x,
                                                       const Eigen::VectorXd& weights) {
  detail::check_dims(spec, x);
  const detail::PairKernel k(spec);
  const detail::RowMatrix a = x;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(spec.num_hyper());
  if (spec.family != KernelFamily::ArcCosine) {
    // Stationary diagonal is the signal variance alone.
    g[0] = weights.sum() * constrain_derivative(spec.signal_variance);
    return g;
  }
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    k.accumulate_hyper_gradient(a.row(i).data(), a.row(i).data(), weights[i], g.data());
  }
  return g;
}

/// Row i, column d: sum_j W_ij d k(x_i, x2_j) / d x_{i,d}.
inline Eigen::MatrixXd contract_input_derivatives(const KernelSpec& spec, const Eigen::MatrixXd& x,
                                                  const Eigen::MatrixXd& x2, const Eigen::MatrixXd& weights) {
  detail::check_dims(spec, x);
  detail::check_dims(spec, x2);
  const detail::PairKernel k(spec);
  const detail::RowMatrix a = x;
  const detail::RowMatrix b = x2;
  detail::RowMatrix out = detail::RowMatrix::Zero(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double w = weights(i, j);
      if (w != 0.0) k.accumulate_input_gradient(a.row(i).data(), b.row(j).data(), w, out.row(i).data());
    }
  }
  return out;
}

}  // namespace autosgp

#endif  // AUTOSGP_KERNELS_HPP
