#ifndef AUTOSGP_TESTS_SUPPORT_HPP
#define AUTOSGP_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autosgp/autosgp.hpp"

namespace testsupport {

inline const std::vector<std::string>& kernel_names() {
  static const std::vector<std::string> names{"se", "matern12", "matern32", "matern52", "arccos0", "arccos1", "arccos2"};
  return names;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo = -2.0,
                                     double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double lo = -2.0, double hi = 2.0) {
  return random_matrix(rng, n, 1, lo, hi);
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

/// Kernel of the named family with hyperparameters drawn log-uniformly.
inline autosgp::KernelSpec random_kernel(std::mt19937_64& rng, const std::string& name, Eigen::Index dim,
                                         double lo = 0.3, double hi = 3.0) {
  autosgp::KernelSpec k = autosgp::kernel_from_name(name, dim);
  k.signal_variance = log_uniform(rng, lo, hi);
  for (Eigen::Index d = 0; d < dim; ++d) k.scales[d] = log_uniform(rng, lo, hi);
  k.bias_variance = log_uniform(rng, lo, hi);
  return k;
}

/// Entry-by-entry gram built from eval_pair only.
inline Eigen::MatrixXd pairwise_gram(const autosgp::KernelSpec& k, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd g(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) g(i, j) = autosgp::eval_pair(k, a.row(i).transpose(), b.row(j).transpose());
  return g;
}

/// log N(y | 0, C) through a symmetric eigendecomposition.
inline double dense_mvn_logpdf(const Eigen::MatrixXd& c, const Eigen::VectorXd& y) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  const Eigen::VectorXd ev = es.eigenvalues();
  const Eigen::VectorXd proj = es.eigenvectors().transpose() * y;
  double quad = 0.0, logdet = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    quad += proj[i] * proj[i] / ev[i];
    logdet += std::log(ev[i]);
  }
  return -0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * quad;
}

/// Explicit N x N Nystrom matrix K_XZ K_ZZ^{-1} K_ZX via a pseudo-inverse.
inline Eigen::MatrixXd dense_nystrom(const autosgp::KernelSpec& k, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z) {
  const Eigen::MatrixXd kzz = pairwise_gram(k, z, z);
  const Eigen::MatrixXd kzx = pairwise_gram(k, z, x);
  return kzx.transpose() * kzz.completeOrthogonalDecomposition().solve(kzx);
}

/// ELBO: log N(y | 0, Q + sI) - tr(K - Q) / (2s).
inline double dense_elbo(const autosgp::KernelSpec& k, double s, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                         const Eigen::VectorXd& y) {
  Eigen::MatrixXd q = dense_nystrom(k, x, z);
  const double tr = pairwise_gram(k, x, x).trace() - q.trace();
  q.diagonal().array() += s;
  return dense_mvn_logpdf(q, y) - 0.5 * std::max(tr, 0.0) / s;
}

/// Upper bound: log-det of Q + sI with the quadratic form of Q + (s + t)I.
inline double dense_upper_bound(const autosgp::KernelSpec& k, double s, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& z, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd q = dense_nystrom(k, x, z);
  const double t = std::max(pairwise_gram(k, x, x).trace() - q.trace(), 0.0);
  Eigen::MatrixXd c1 = q, c2 = q;
  c1.diagonal().array() += s;
  c2.diagonal().array() += s + t;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c1);
  const double logdet = es.eigenvalues().array().log().sum();
  const double quad = y.dot(c2.ldlt().solve(y));
  return -0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * quad;
}

/// Predictive marginals of the collapsed posterior from dense N x N algebra.
inline void dense_sgpr_predict(const autosgp::KernelSpec& k, double s, const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::MatrixXd& xs,
                               Eigen::VectorXd& mean, Eigen::VectorXd& var) {
  const Eigen::MatrixXd kzz = pairwise_gram(k, z, z);
  const Eigen::MatrixXd kzx = pairwise_gram(k, z, x);
  const Eigen::MatrixXd kzs = pairwise_gram(k, z, xs);
  const auto kzz_inv = kzz.completeOrthogonalDecomposition();
  const Eigen::MatrixXd qsx = kzs.transpose() * kzz_inv.solve(kzx);
  Eigen::MatrixXd c = kzx.transpose() * kzz_inv.solve(kzx);
  c.diagonal().array() += s;
  const auto c_ldlt = c.ldlt();
  mean = qsx * c_ldlt.solve(y);
  var.resize(xs.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const double kss = autosgp::eval_pair(k, xs.row(i).transpose(), xs.row(i).transpose());
    var[i] = kss - qsx.row(i).dot(c_ldlt.solve(qsx.row(i).transpose()));
  }
}

/// Central finite differences of a scalar function.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& u, double h = 1e-6) {
  Eigen::VectorXd g(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    Eigen::VectorXd up = u, dn = u;
    up[i] += h;
    dn[i] -= h;
    g[i] = (f(up) - f(dn)) / (2.0 * h);
  }
  return g;
}

/// Max over components of |a - b| / max(|b|, floor).
inline double max_rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-3) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), floor));
  }
  return worst;
}

/// Brute-force greedy selection: at every step recompute each candidate's
/// Nystrom residual from scratch with the current selected set.
inline std::vector<Eigen::Index> brute_force_greedy(const autosgp::KernelSpec& k, const Eigen::MatrixXd& x,
                                                    Eigen::Index m) {
  std::vector<Eigen::Index> sel;
  const Eigen::MatrixXd kxx = pairwise_gram(k, x, x);
  const double stop = 1e-12 * kxx.diagonal().maxCoeff();
  for (Eigen::Index step = 0; step < m; ++step) {
    Eigen::Index best = -1;
    double best_v = -1.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double r = kxx(i, i);
      if (std::find(sel.begin(), sel.end(), i) != sel.end()) {
        r = 0.0;
      } else if (!sel.empty()) {
        const auto s = static_cast<Eigen::Index>(sel.size());
        Eigen::MatrixXd kss(s, s);
        Eigen::VectorXd ksi(s);
        for (Eigen::Index a = 0; a < s; ++a) {
          ksi[a] = kxx(sel[a], i);
          for (Eigen::Index b = 0; b < s; ++b) kss(a, b) = kxx(sel[a], sel[b]);
        }
        r -= ksi.dot(kss.ldlt().solve(ksi));
      }
      r = std::max(r, 0.0);
      if (r > best_v) {
        best_v = r;
        best = i;
      }
    }
    if (!(best_v > stop)) break;
    sel.push_back(best);
  }
  return sel;
}

}  // namespace testsupport

#endif  // AUTOSGP_TESTS_SUPPORT_HPP
