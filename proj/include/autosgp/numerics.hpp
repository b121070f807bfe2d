#ifndef AUTOSGP_NUMERICS_HPP
#define AUTOSGP_NUMERICS_HPP

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "autosgp/errors.hpp"

namespace autosgp {

/// Retry schedule for the adaptive-jitter Cholesky. Attempt k (1-based)
/// adds initial_jitter * growth_factor^(k-1) to the diagonal; a jitter-free
/// attempt always precedes the schedule.
struct JitterPolicy {
  double initial_jitter = 1e-10;
  double growth_factor = 10.0;
  int max_attempts = 10;

  void validate() const {
    if (!(initial_jitter > 0.0) || !(growth_factor > 1.0) || max_attempts < 1) {
      throw std::invalid_argument("JitterPolicy: need initial_jitter > 0, growth_factor > 1, max_attempts >= 1");
    }
  }

  /// Jitter for a 0-based attempt index; index 0 is the jitter-free attempt.
  [[nodiscard]] double jitter_for_attempt(int attempt) const {
    if (attempt <= 0) return 0.0;
    return initial_jitter * std::pow(growth_factor, attempt - 1);
  }
};

struct CholFactor {
  Eigen::MatrixXd lower;
  double jitter_used = 0.0;

  [[nodiscard]] Eigen::Index size() const { return lower.rows(); }

  /// L^{-1} B
  template <typename Derived>
  [[nodiscard]] Eigen::MatrixXd solve_lower(const Eigen::MatrixBase<Derived>& rhs) const {
    return lower.triangularView<Eigen::Lower>().solve(rhs);
  }

  /// L^{-T} B
  template <typename Derived>
  [[nodiscard]] Eigen::MatrixXd solve_upper(const Eigen::MatrixBase<Derived>& rhs) const {
    return lower.transpose().triangularView<Eigen::Upper>().solve(rhs);
  }

  /// (L L^T)^{-1} B
  template <typename Derived>
  [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixBase<Derived>& rhs) const {
    return solve_upper(solve_lower(rhs));
  }

  /// (L L^T)^{-1}, formed explicitly. Only for small systems.
  [[nodiscard]] Eigen::MatrixXd inverse() const {
    return solve(Eigen::MatrixXd::Identity(size(), size()));
  }
};

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

inline double max_abs_entry(const Eigen::MatrixXd& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

namespace detail {

// Eigen's LLT rejects pivots <= 0 but lets NaN through, so the finiteness of
// the resulting diagonal is checked separately.
inline bool try_cholesky(const Eigen::MatrixXd& a, Eigen::MatrixXd& lower) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    const double d = lower(i, i);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
  }
  return lower.allFinite();
}

}  // namespace detail

/// Cholesky factor of (A + eps I) for the smallest eps in the policy schedule
/// that yields strictly positive, finite pivots. `first_attempt` skips the
/// leading attempts (0 = start jitter-free).
inline CholFactor jittered_cholesky(const Eigen::MatrixXd& a, const JitterPolicy& policy = {},
                                    int first_attempt = 0) {
  policy.validate();
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw std::invalid_argument("jittered_cholesky: expected a non-empty square matrix");
  }
  const Eigen::MatrixXd sym = symmetrize(a);
  const Eigen::Index n = sym.rows();
  CholFactor out;
  for (int attempt = std::max(first_attempt, 0); attempt <= policy.max_attempts; ++attempt) {
    const double eps = policy.jitter_for_attempt(attempt);
    Eigen::MatrixXd shifted = sym;
    if (eps > 0.0) shifted.diagonal().array() += eps;
    if (detail::try_cholesky(shifted, out.lower)) {
      out.jitter_used = eps;
      return out;
    }
  }
  throw PositiveDefiniteFailure("jittered_cholesky: matrix of size " + std::to_string(n) +
                                " not positive definite after " + std::to_string(policy.max_attempts) +
                                " jitter attempts");
}

/// log|A + jitter I| from its factor.
inline double log_det(const CholFactor& factor) {
  return 2.0 * factor.lower.diagonal().array().log().sum();
}

}  // namespace autosgp

#endif  // AUTOSGP_NUMERICS_HPP
