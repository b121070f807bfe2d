#ifndef AUTOSGP_INDUCING_HPP
#define AUTOSGP_INDUCING_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "autosgp/kernels.hpp"

namespace autosgp {

struct SelectionResult {
  std::vector<Eigen::Index> indices;
  /// k(x_j, x_j) - q(x_j, x_j) after the last selection.
  Eigen::VectorXd residual_diag_final;
};

/// Greedy variance selection: repeatedly picks the training input with the
/// largest Nystrom residual variance (partial pivoted Cholesky with diagonal
/// pivoting). Ties go to the lowest index. Stops early once the largest
/// residual drops below 1e-12 of the largest initial diagonal entry.
/// O(N M^2) time and O(N M) memory.
inline SelectionResult greedy_variance_select(const Eigen::MatrixXd& x, const KernelSpec& spec, Eigen::Index m) {
  const Eigen::Index n = x.rows();
  if (m < 1 || m > n) throw std::invalid_argument("greedy_variance_select: need 1 <= M <= N");
  detail::check_dims(spec, x);
  const detail::PairKernel k(spec);
  const detail::RowMatrix pts = x;

  SelectionResult out;
  Eigen::VectorXd resid = gram_diag(spec, x);
  const double stop_below = 1e-12 * resid.maxCoeff();
  Eigen::MatrixXd factor(n, m);
  out.indices.reserve(m);

  for (Eigen::Index step = 0; step < m; ++step) {
    Eigen::Index pivot = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
      if (resid[i] > resid[pivot]) pivot = i;
    }
    const double pivot_var = resid[pivot];
    if (!(pivot_var > stop_below)) break;

    const double root = std::sqrt(pivot_var);
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i) col[i] = k.value(pts.row(i).data(), pts.row(pivot).data());
    if (step > 0) col.noalias() -= factor.leftCols(step) * factor.row(pivot).head(step).transpose();
    col /= root;
    factor.col(step) = col;
    resid -= col.cwiseAbs2();
    resid[pivot] = 0.0;
    resid = resid.cwiseMax(0.0);
    out.indices.push_back(pivot);
  }
  out.residual_diag_final = resid;
  return out;
}

/// Rows of `x` at the given indices.
inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
  return out;
}

}  // namespace autosgp

#endif  // AUTOSGP_INDUCING_HPP
