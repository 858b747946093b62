#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "netcons/subspace.hpp"
#include "netcons/system.hpp"
#include "netcons/types.hpp"

namespace netcons {

/// One steady-state oscillation pattern of the undamped nodes. The position
/// pattern over the reduced node order is shape_real + i * shape_imag; for
/// this symmetric class the eigenspaces are real, so shape_imag stays zero.
template <typename Scalar>
struct OscillationMode {
  Scalar frequency = Scalar(0);  // rad per unit time, > 0
  Vector<Scalar> shape_real;
  Vector<Scalar> shape_imag;
  std::vector<std::string> participating_nodes;
};

/// Consensus verdicts computed along independent routes, plus the oscillation
/// data when consensus fails. The five verdicts are provably equivalent, so
/// agreement is a software health check rather than a mathematical outcome.
template <typename Scalar>
struct ConsensusReport {
  bool by_observability = false;
  bool by_reduced_eigenvectors = false;       // reduced-graph eigenvector test
  bool by_full_eigenvectors = false;          // full-graph eigenvector test
  bool by_reduced_eigenvectors_flipped = false;  // mass on the other side
  bool by_full_eigenvectors_flipped = false;
  bool by_pinned_dynamics = false;  // cross-check only, damped nodes pinned
  bool agreement = false;           // the five main verdicts coincide
  bool consensus = false;
  Vector<Scalar> beta;
  Index oscillation_dim = 0;
  std::vector<OscillationMode<Scalar>> modes;
};

/// Largest invariant set with vanishing dissipation, expressed in the
/// internal (p_d, p_u, q) coordinates. Computed by pushing the unobservable
/// subspace of the extended reduced pair through the lift-back map; the
/// damped-momentum block of the result is identically zero by construction.
template <typename Scalar>
SubspaceBasis<Scalar> lasalle_subspace(const ReducedSystem<Scalar>& red,
                                       Scalar tol = Scalar(defaults::rank_tol)) {
  const SubspaceBasis<Scalar> unobs =
      observability_kernel(red.C_hat_ext, red.A_hat, tol);
  const Index ru = red.r * red.n_undamped;
  const Index rm = red.r * red.m;
  const Index total = red.Q_hat.rows();

  if (unobs.trivial()) return SubspaceBasis<Scalar>::zero(total, tol);

  // The lift is injective on the unobservable subspace, so the dimension is
  // preserved. Orthonormalize only the live rows to keep the damped block
  // exactly zero.
  const Matrix<Scalar> mapped =
      red.Q_hat.bottomRows(ru + rm) * unobs.basis;
  const Matrix<Scalar> ortho = detail::orthonormal_range(mapped, tol);
  Matrix<Scalar> basis = Matrix<Scalar>::Zero(total, ortho.cols());
  basis.bottomRows(ru + rm) = ortho;
  return {std::move(basis), total, tol};
}

/// Consensus iff the extended reduced pair is observable.
template <typename Scalar>
bool observability_verdict(const ReducedSystem<Scalar>& red,
                           Scalar tol = Scalar(defaults::rank_tol)) {
  return observability_kernel(red.C_hat_ext, red.A_hat, tol).trivial();
}

namespace detail {

// True when no eigenspace in the list meets the given subspace nontrivially.
template <typename Scalar>
bool all_intersections_trivial(const std::vector<EigenPair<Scalar>>& pairs,
                               const SubspaceBasis<Scalar>& subspace) {
  for (const auto& pair : pairs)
    if (!intersect(pair.eigenvectors, subspace).trivial()) return false;
  return true;
}

}  // namespace detail

/// Consensus iff no eigenvector of M_u^{-1} Lt_u lies in the joint kernel of
/// the interconnection block and the residual undamped damping.
template <typename Scalar>
bool reduced_eigenvector_verdict(const ReducedSystem<Scalar>& red,
                                 Scalar tol = Scalar(defaults::rank_tol)) {
  const auto pairs = generalized_eigs(red.L_tilde_u, red.M_u, tol);
  const Index ru = red.r * red.n_undamped;
  Matrix<Scalar> stacked(red.L_ii.rows() + ru, ru);
  stacked.topRows(red.L_ii.rows()) = red.L_ii;
  stacked.bottomRows(ru) = red.R_u;
  return detail::all_intersections_trivial(pairs, kernel(stacked, tol));
}

/// Consensus iff every eigenvector of M^{-1} L in the kernel of the damping
/// has a nonzero entry at some damped node.
template <typename Scalar>
bool full_eigenvector_verdict(const SystemMatrices<Scalar>& sys,
                              Scalar tol = Scalar(defaults::rank_tol)) {
  const auto pairs = generalized_eigs(sys.L_total, sys.M, tol);
  const Index rn = sys.r * sys.n;
  const Index rd = sys.r * sys.n_damped;
  // x in ker(R) supported on the undamped block only.
  Matrix<Scalar> stacked(rn + rd, rn);
  stacked.topRows(rn) = sys.R;
  stacked.bottomRows(rd).setZero();
  stacked.block(rn, 0, rd, rd) = Matrix<Scalar>::Identity(rd, rd);
  return detail::all_intersections_trivial(pairs, kernel(stacked, tol));
}

/// The same two tests after moving the inertia to the other side of the
/// pencil (eigenvectors of Lt_u M_u^{-1} and L M^{-1}). Returns
/// {reduced, full}.
template <typename Scalar>
std::pair<bool, bool> flipped_verdicts(const SystemMatrices<Scalar>& sys,
                                       const ReducedSystem<Scalar>& red,
                                       Scalar tol = Scalar(defaults::rank_tol)) {
  Eigen::LLT<Matrix<Scalar>> mu_llt(red.M_u);
  const Index ru = red.r * red.n_undamped;
  const Matrix<Scalar> mu_inv =
      mu_llt.solve(Matrix<Scalar>::Identity(ru, ru));
  const auto reduced_pairs =
      generalized_eigs_transposed(red.L_tilde_u, red.M_u, tol);
  Matrix<Scalar> reduced_stack(red.L_ii.rows() + ru, ru);
  reduced_stack.topRows(red.L_ii.rows()) = red.L_ii * mu_inv;
  reduced_stack.bottomRows(ru) = red.R_u * mu_inv;
  const bool reduced_ok = detail::all_intersections_trivial(
      reduced_pairs, kernel(reduced_stack, tol));

  const Index rn = sys.r * sys.n;
  const Index rd = sys.r * sys.n_damped;
  Eigen::LLT<Matrix<Scalar>> m_llt(sys.M);
  const Matrix<Scalar> m_inv = m_llt.solve(Matrix<Scalar>::Identity(rn, rn));
  const auto full_pairs = generalized_eigs_transposed(sys.L_total, sys.M, tol);
  Matrix<Scalar> full_stack(rn + rd, rn);
  full_stack.topRows(rn) = sys.R * m_inv;
  full_stack.bottomRows(rd).setZero();
  full_stack.block(rn, 0, rd, rd) = Matrix<Scalar>::Identity(rd, rd);
  const bool full_ok = detail::all_intersections_trivial(
      full_pairs, kernel(full_stack, tol));
  return {reduced_ok, full_ok};
}

/// Cross-check via the pair that describes the undamped dynamics with the
/// damped nodes pinned. Stated without proof in the source material, so it
/// is reported alongside the main verdicts but excluded from the agreement
/// invariant.
template <typename Scalar>
bool pinned_dynamics_verdict(const ReducedSystem<Scalar>& red,
                             Scalar tol = Scalar(defaults::rank_tol)) {
  return observability_kernel(red.C_breve, red.A_breve, tol).trivial();
}

/// Steady-state oscillation modes: for every positive eigenvalue mu of
/// M_u^{-1} Lt_u whose eigenspace meets the joint kernel of the
/// interconnection block and the residual damping, one mode per basis vector
/// with frequency sqrt(mu). Mode shapes automatically carry zero total
/// momentum.
template <typename Scalar>
std::vector<OscillationMode<Scalar>> oscillation_modes(
    const ReducedSystem<Scalar>& red, Scalar tol = Scalar(defaults::rank_tol)) {
  const Index r = red.r;
  const Index ru = r * red.n_undamped;
  const auto pairs = generalized_eigs(red.L_tilde_u, red.M_u, tol);
  Scalar mu_max = Scalar(0);
  for (const auto& pair : pairs)
    mu_max = std::max(mu_max, std::abs(pair.eigenvalue));

  Matrix<Scalar> stacked(red.L_ii.rows() + ru, ru);
  stacked.topRows(red.L_ii.rows()) = red.L_ii;
  stacked.bottomRows(ru) = red.R_u;
  const SubspaceBasis<Scalar> constraint_kernel = kernel(stacked, tol);

  std::vector<OscillationMode<Scalar>> modes;
  const Scalar zero_cut =
      Scalar(defaults::cluster_tol) * std::max<Scalar>(Scalar(1), mu_max);
  for (const auto& pair : pairs) {
    if (pair.eigenvalue <= zero_cut) continue;
    const SubspaceBasis<Scalar> violating =
        intersect(pair.eigenvectors, constraint_kernel);
    for (Index c = 0; c < violating.dim(); ++c) {
      OscillationMode<Scalar> mode;
      mode.frequency = std::sqrt(pair.eigenvalue);
      mode.shape_real = violating.basis.col(c);
      mode.shape_imag = Vector<Scalar>::Zero(ru);
      const Scalar peak = mode.shape_real.cwiseAbs().maxCoeff();
      for (Index j = 0; j < red.n_undamped; ++j) {
        if (mode.shape_real.segment(j * r, r).cwiseAbs().maxCoeff() >
            Scalar(1e-8) * peak)
          mode.participating_nodes.push_back(
              red.undamped_ids[static_cast<std::size_t>(j)]);
      }
      modes.push_back(std::move(mode));
    }
  }
  return modes;
}

/// Checks conservation of total undamped momentum along a sampled trajectory
/// that starts inside the zero-dissipation invariant set. Columns of states
/// are shifted states in internal (p_d, p_u, q) coordinates.
template <typename Scalar, typename Derived>
bool momentum_check(const SystemMatrices<Scalar>& sys,
                    const Eigen::MatrixBase<Derived>& states_expr, Scalar tol) {
  const Index r = sys.r;
  const Matrix<Scalar> states = states_expr;
  for (Index s = 0; s < states.cols(); ++s) {
    Vector<Scalar> total = Vector<Scalar>::Zero(r);
    for (Index j = sys.n_damped; j < sys.n; ++j)
      total += states.col(s).segment(j * r, r);
    if (total.cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

/// Runs every verdict route and assembles the consensus report.
template <typename Scalar>
ConsensusReport<Scalar> analyze(const SystemMatrices<Scalar>& sys,
                                const ReducedSystem<Scalar>& red,
                                const Equilibrium<Scalar>& eq,
                                Scalar tol = Scalar(defaults::rank_tol)) {
  ConsensusReport<Scalar> report;
  report.by_observability = observability_verdict(red, tol);
  report.by_reduced_eigenvectors = reduced_eigenvector_verdict(red, tol);
  report.by_full_eigenvectors = full_eigenvector_verdict(sys, tol);
  const auto flipped = flipped_verdicts(sys, red, tol);
  report.by_reduced_eigenvectors_flipped = flipped.first;
  report.by_full_eigenvectors_flipped = flipped.second;
  report.by_pinned_dynamics = pinned_dynamics_verdict(red, tol);

  report.agreement =
      report.by_observability == report.by_reduced_eigenvectors &&
      report.by_observability == report.by_full_eigenvectors &&
      report.by_observability == report.by_reduced_eigenvectors_flipped &&
      report.by_observability == report.by_full_eigenvectors_flipped;
  report.consensus = report.by_observability;
  report.beta = eq.beta;
  report.oscillation_dim = lasalle_subspace(red, tol).dim();
  report.modes = oscillation_modes(red, tol);
  return report;
}

template <typename Scalar>
ConsensusReport<Scalar> analyze(const NetworkSpec<Scalar>& spec,
                                Scalar tol = Scalar(defaults::rank_tol)) {
  validate(spec, tol);
  const SystemMatrices<Scalar> sys = assemble(spec, tol);
  const Equilibrium<Scalar> eq = equilibrium(sys);
  const ReducedSystem<Scalar> red = kron_reduce(sys);
  return analyze(sys, red, eq, tol);
}

}  // namespace netcons
