#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "netcons/types.hpp"

namespace netcons {

/// Orthonormal basis of a linear subspace together with the tolerance that
/// was used to decide its dimension. An empty basis (zero columns) is the
/// trivial subspace {0}.
template <typename Scalar>
struct SubspaceBasis {
  Matrix<Scalar> basis;  // ambient_dim x dim, orthonormal columns
  Index ambient_dim = 0;
  Scalar tol = Scalar(defaults::rank_tol);

  Index dim() const { return basis.cols(); }
  bool trivial() const { return basis.cols() == 0; }

  static SubspaceBasis zero(Index ambient, Scalar tol_used) {
    return {Matrix<Scalar>::Zero(ambient, 0), ambient, tol_used};
  }
  static SubspaceBasis full(Index ambient, Scalar tol_used) {
    return {Matrix<Scalar>::Identity(ambient, ambient), ambient, tol_used};
  }
};

namespace detail {

// Orthonormal columns spanning col(a), using the same relative singular
// value cutoff as kernel().
template <typename Scalar>
Matrix<Scalar> orthonormal_range(const Matrix<Scalar>& a, Scalar tol) {
  if (a.cols() == 0 || a.rows() == 0)
    return Matrix<Scalar>::Zero(a.rows(), 0);
  Eigen::JacobiSVD<Matrix<Scalar>> svd(a, Eigen::ComputeThinU);
  const Scalar sigma_max = svd.singularValues().size() > 0
                               ? svd.singularValues()(0)
                               : Scalar(0);
  if (sigma_max <= Scalar(defaults::abs_floor))
    return Matrix<Scalar>::Zero(a.rows(), 0);
  Index rank = 0;
  while (rank < svd.singularValues().size() &&
         svd.singularValues()(rank) > tol * sigma_max)
    ++rank;
  return svd.matrixU().leftCols(rank);
}

}  // namespace detail

/// Orthonormal basis of {x : A x = 0}, computed from the SVD of A. Singular
/// values sigma <= tol * sigma_max count as zero.
template <typename Derived>
SubspaceBasis<typename Derived::Scalar> kernel(
    const Eigen::MatrixBase<Derived>& a_expr, typename Derived::Scalar tol) {
  using Scalar = typename Derived::Scalar;
  const Matrix<Scalar> a = a_expr;
  const Index d = a.cols();
  if (d == 0) return SubspaceBasis<Scalar>::zero(0, tol);
  if (a.rows() == 0) return SubspaceBasis<Scalar>::full(d, tol);

  Eigen::JacobiSVD<Matrix<Scalar>> svd(a, Eigen::ComputeFullV);
  const Scalar sigma_max = svd.singularValues().size() > 0
                               ? svd.singularValues()(0)
                               : Scalar(0);
  if (sigma_max <= Scalar(defaults::abs_floor))
    return SubspaceBasis<Scalar>::full(d, tol);

  Index rank = 0;
  while (rank < svd.singularValues().size() &&
         svd.singularValues()(rank) > tol * sigma_max)
    ++rank;
  return {svd.matrixV().rightCols(d - rank), d, tol};
}

/// Basis of U ∩ V via the kernel of the stacked orthogonal-complement
/// projectors: x lies in both subspaces iff (I - UU^T)x = 0 and
/// (I - VV^T)x = 0.
template <typename Scalar>
SubspaceBasis<Scalar> intersect(const SubspaceBasis<Scalar>& u,
                                const SubspaceBasis<Scalar>& v) {
  if (u.ambient_dim != v.ambient_dim)
    throw AmbientMismatch("subspace intersection: ambient dimensions " +
                          std::to_string(u.ambient_dim) + " and " +
                          std::to_string(v.ambient_dim) + " differ");
  const Index d = u.ambient_dim;
  const Scalar tol = std::max(u.tol, v.tol);
  if (u.trivial() || v.trivial()) return SubspaceBasis<Scalar>::zero(d, tol);

  Matrix<Scalar> stacked(2 * d, d);
  stacked.topRows(d) =
      Matrix<Scalar>::Identity(d, d) - u.basis * u.basis.transpose();
  stacked.bottomRows(d) =
      Matrix<Scalar>::Identity(d, d) - v.basis * v.basis.transpose();
  return kernel(stacked, tol);
}

/// Moore-Penrose pseudoinverse with singular values below tol * sigma_max
/// treated as zero.
template <typename Derived>
Matrix<typename Derived::Scalar> pseudoinverse(
    const Eigen::MatrixBase<Derived>& a_expr, typename Derived::Scalar tol) {
  using Scalar = typename Derived::Scalar;
  const Matrix<Scalar> a = a_expr;
  if (a.rows() == 0 || a.cols() == 0)
    return Matrix<Scalar>::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Matrix<Scalar>> svd(
      a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Scalar sigma_max = svd.singularValues()(0);
  Vector<Scalar> inv = Vector<Scalar>::Zero(svd.singularValues().size());
  if (sigma_max > Scalar(defaults::abs_floor)) {
    for (Index i = 0; i < inv.size(); ++i)
      if (svd.singularValues()(i) > tol * sigma_max)
        inv(i) = Scalar(1) / svd.singularValues()(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// One eigenvalue of the generalized problem together with an orthonormal
/// basis of its full eigenspace.
template <typename Scalar>
struct EigenPair {
  Scalar eigenvalue = Scalar(0);
  SubspaceBasis<Scalar> eigenvectors;
};

namespace detail {

// Shared core of the generalized solvers: eigen-decompose the symmetrized
// pencil M^{-1/2} L M^{-1/2} and map the eigenvectors back with the given
// transform (M^{-1/2} for M^{-1}L, M^{1/2} for L M^{-1}). Nearby eigenvalues
// are clustered into one eigenspace.
template <typename Scalar>
std::vector<EigenPair<Scalar>> generalized_eigs_impl(
    const Matrix<Scalar>& l, const Matrix<Scalar>& m, Scalar tol,
    Scalar cluster_tol, bool transposed) {
  if (l.rows() != l.cols()) throw NotSymmetric("matrix is not square");
  const Scalar sym_cut = std::max<Scalar>(
      tol * l.template lpNorm<Eigen::Infinity>(), Scalar(defaults::abs_floor));
  if ((l - l.transpose()).template lpNorm<Eigen::Infinity>() > sym_cut)
    throw NotSymmetric("matrix is not symmetric within tolerance");
  if (m.rows() != l.rows() || m.cols() != l.cols())
    throw DimensionMismatch("mass matrix size does not match");

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> m_es(m);
  if (m_es.info() != Eigen::Success ||
      m_es.eigenvalues().minCoeff() <=
          Scalar(defaults::abs_floor) *
              std::max<Scalar>(m_es.eigenvalues().maxCoeff(), Scalar(1)))
    throw NotSPD("mass matrix is not symmetric positive definite");

  const Matrix<Scalar> m_inv_sqrt = m_es.operatorInverseSqrt();
  const Matrix<Scalar> m_sqrt = m_es.operatorSqrt();
  const Matrix<Scalar> symmetrized = m_inv_sqrt * l * m_inv_sqrt;

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(
      Scalar(0.5) * (symmetrized + symmetrized.transpose()));
  const Vector<Scalar>& mu = es.eigenvalues();

  std::vector<EigenPair<Scalar>> pairs;
  const Matrix<Scalar>& back = transposed ? m_sqrt : m_inv_sqrt;
  Index start = 0;
  while (start < mu.size()) {
    Index stop = start + 1;
    while (stop < mu.size() &&
           std::abs(mu(stop) - mu(stop - 1)) <=
               cluster_tol * std::max<Scalar>(Scalar(1), std::abs(mu(stop))))
      ++stop;
    const Matrix<Scalar> mapped =
        back * es.eigenvectors().middleCols(start, stop - start);
    EigenPair<Scalar> pair;
    pair.eigenvalue = mu.segment(start, stop - start).mean();
    pair.eigenvectors = {orthonormal_range(mapped, tol), l.rows(), tol};
    pairs.push_back(std::move(pair));
    start = stop;
  }
  return pairs;
}

}  // namespace detail

/// Eigenvalues and eigenspaces of M^{-1} L for symmetric PSD L and SPD M.
/// Eigenvalues closer than cluster_tol (relative) are grouped into a single
/// eigenspace; eigenvectors are returned in the original coordinates.
template <typename Scalar>
std::vector<EigenPair<Scalar>> generalized_eigs(
    const Matrix<Scalar>& l, const Matrix<Scalar>& m, Scalar tol,
    Scalar cluster_tol = Scalar(defaults::cluster_tol)) {
  return detail::generalized_eigs_impl(l, m, tol, cluster_tol, false);
}

/// Same pencil viewed from the other side: eigenspaces of L M^{-1}, i.e. of
/// the transpose of M^{-1} L.
template <typename Scalar>
std::vector<EigenPair<Scalar>> generalized_eigs_transposed(
    const Matrix<Scalar>& l, const Matrix<Scalar>& m, Scalar tol,
    Scalar cluster_tol = Scalar(defaults::cluster_tol)) {
  return detail::generalized_eigs_impl(l, m, tol, cluster_tol, true);
}

/// Unobservable subspace from the stacked observability matrix
/// [C; CA; ...; CA^{d-1}]. A is rescaled by its norm first, which leaves the
/// kernel unchanged and keeps the powers well conditioned.
template <typename Scalar>
SubspaceBasis<Scalar> observability_kernel_stacked(const Matrix<Scalar>& c,
                                                   const Matrix<Scalar>& a,
                                                   Scalar tol) {
  const Index d = a.rows();
  const Index p = c.rows();
  if (p == 0) return SubspaceBasis<Scalar>::full(d, tol);

  const Scalar a_norm = a.template lpNorm<Eigen::Infinity>();
  const Matrix<Scalar> a_scaled =
      a_norm > Scalar(1) ? Matrix<Scalar>(a / a_norm) : a;

  Matrix<Scalar> stacked(p * d, d);
  Matrix<Scalar> block = c;
  stacked.topRows(p) = block;
  for (Index k = 1; k < d; ++k) {
    block = block * a_scaled;
    stacked.middleRows(k * p, p) = block;
  }
  return kernel(stacked, tol);
}

/// Unobservable subspace as the largest A-invariant subspace contained in
/// ker(C): iterate N <- N ∩ A^{-1}N starting from N = ker(C). This realizes
/// the eigenvector characterization behind the Hautus rank test without
/// forming matrix powers.
template <typename Scalar>
SubspaceBasis<Scalar> observability_kernel_invariant(const Matrix<Scalar>& c,
                                                     const Matrix<Scalar>& a,
                                                     Scalar tol) {
  const Index d = a.rows();
  SubspaceBasis<Scalar> n = kernel(c, tol);
  while (!n.trivial()) {
    const Matrix<Scalar> complement =
        Matrix<Scalar>::Identity(d, d) - n.basis * n.basis.transpose();
    Matrix<Scalar> stacked(2 * d, d);
    stacked.topRows(d) = complement;
    stacked.bottomRows(d) = complement * a;
    SubspaceBasis<Scalar> next = kernel(stacked, tol);
    if (next.dim() == n.dim()) return next;
    n = std::move(next);
  }
  return n;
}

/// Kernel of the observability matrix of the pair (C, A). For small systems
/// the stacked computation is used and cross-checked in dimension against
/// the invariant-subspace route; large systems use the latter only, since
/// stacked powers lose precision beyond a few dozen states.
template <typename Scalar>
SubspaceBasis<Scalar> observability_kernel(const Matrix<Scalar>& c,
                                           const Matrix<Scalar>& a,
                                           Scalar tol) {
  if (a.rows() != a.cols())
    throw DimensionMismatch("state matrix must be square");
  if (c.cols() != a.rows())
    throw DimensionMismatch("output matrix has " + std::to_string(c.cols()) +
                            " columns but the state dimension is " +
                            std::to_string(a.rows()));
  if (a.rows() > 30) return observability_kernel_invariant(c, a, tol);

  SubspaceBasis<Scalar> stacked = observability_kernel_stacked(c, a, tol);
  SubspaceBasis<Scalar> invariant = observability_kernel_invariant(c, a, tol);
  if (stacked.dim() != invariant.dim())
    throw Error("observability kernel: stacked and invariant-subspace "
                "computations disagree (" + std::to_string(stacked.dim()) +
                " vs " + std::to_string(invariant.dim()) +
                "); the problem is too ill conditioned for the tolerance");
  return stacked;
}

}  // namespace netcons
