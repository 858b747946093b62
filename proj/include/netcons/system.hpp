#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "netcons/graph.hpp"
#include "netcons/subspace.hpp"
#include "netcons/types.hpp"

namespace netcons {

/// Every matrix object derived from a validated spec. All matrices live in
/// an internal ordering with the damped nodes first and the edges grouped as
/// (damped-damped, interconnecting, undamped-undamped); node_perm and
/// edge_perm map internal positions back to the user's input order. Public
/// reporting converts back through those maps.
template <typename Scalar>
struct SystemMatrices {
  Index r = 1;  // spatial dimension per node
  Index n = 0;  // nodes
  Index m = 0;  // edges
  Index n_damped = 0;
  Index n_undamped = 0;

  std::vector<Index> node_perm;      // internal -> original node index
  std::vector<Index> node_perm_inv;  // original -> internal node index
  std::vector<Index> edge_perm;      // internal -> original edge index
  std::vector<NodeClass> classes;    // internal node order
  std::vector<std::string> node_ids;  // internal node order
  EdgePartition partition;            // original edge indices

  Matrix<Scalar> incidence;  // n x m, internal ordering
  Matrix<Scalar> cycle;      // m x (m-n+1), internal edge ordering

  Matrix<Scalar> B_lift;  // incidence kron I_r
  Matrix<Scalar> C_lift;  // cycle kron I_r

  Matrix<Scalar> M;  // rn x rn block diagonal inertia
  Matrix<Scalar> R;  // rn x rn block diagonal damping
  Matrix<Scalar> W;  // rm x rm block diagonal edge weights
  Vector<Scalar> input;  // rn stacked external input

  Matrix<Scalar> L_total;  // B_lift W B_lift^T

  // Blocks of the damped-first Laplacian decomposition. L_dd and L_uu are
  // the Laplacians of the damped-only and undamped-only subgraphs; L_di and
  // L_ui are the block-diagonal degree contributions of the interconnecting
  // edges; L_ii is the damped-by-undamped coupling block.
  Matrix<Scalar> L_dd, L_di, L_ii, L_ui, L_uu;

  Matrix<Scalar> A_closed;  // r(n+m) closed-loop state matrix
  Matrix<Scalar> G;         // r(n+m) x rn input map [I; 0]

  Index state_dim() const { return r * (n + m); }
  Index output_dim() const { return r * n; }

  Matrix<Scalar> damped_block() const { return L_dd + L_di; }
  Matrix<Scalar> undamped_block() const { return L_uu + L_ui; }

  Matrix<Scalar> M_u() const {
    return M.bottomRightCorner(r * n_undamped, r * n_undamped);
  }
  Matrix<Scalar> R_u() const {
    return R.bottomRightCorner(r * n_undamped, r * n_undamped);
  }

  /// Stacked all-ones selector (1 kron I_r) over the given block count.
  static Matrix<Scalar> ones_lift(Index blocks, Index r) {
    Matrix<Scalar> s(blocks * r, r);
    for (Index i = 0; i < blocks; ++i)
      s.block(i * r, 0, r, r) = Matrix<Scalar>::Identity(r, r);
    return s;
  }

  /// Reorder a stacked per-node vector from user order to internal order.
  Vector<Scalar> node_vector_to_internal(const Vector<Scalar>& v) const {
    Vector<Scalar> out(v.size());
    for (Index i = 0; i < n; ++i)
      out.segment(i * r, r) = v.segment(node_perm[static_cast<std::size_t>(i)] * r, r);
    return out;
  }
  Vector<Scalar> node_vector_to_original(const Vector<Scalar>& v) const {
    Vector<Scalar> out(v.size());
    for (Index i = 0; i < n; ++i)
      out.segment(node_perm[static_cast<std::size_t>(i)] * r, r) = v.segment(i * r, r);
    return out;
  }
  Vector<Scalar> edge_vector_to_internal(const Vector<Scalar>& v) const {
    Vector<Scalar> out(v.size());
    for (Index k = 0; k < m; ++k)
      out.segment(k * r, r) = v.segment(edge_perm[static_cast<std::size_t>(k)] * r, r);
    return out;
  }
  Vector<Scalar> edge_vector_to_original(const Vector<Scalar>& v) const {
    Vector<Scalar> out(v.size());
    for (Index k = 0; k < m; ++k)
      out.segment(edge_perm[static_cast<std::size_t>(k)] * r, r) = v.segment(k * r, r);
    return out;
  }
  Vector<Scalar> state_to_internal(const Vector<Scalar>& p_user,
                                   const Vector<Scalar>& q_user) const {
    Vector<Scalar> z(state_dim());
    z.head(r * n) = node_vector_to_internal(p_user);
    z.tail(r * m) = edge_vector_to_internal(q_user);
    return z;
  }
};

/// Assembles the closed-loop system for a validated spec: lifted incidence
/// and cycle matrices, block-diagonal parameters, the total Laplacian with
/// its damped-first block decomposition, and the closed-loop state matrix.
template <typename Scalar>
SystemMatrices<Scalar> assemble(const NetworkSpec<Scalar>& spec,
                                Scalar tol = Scalar(defaults::rank_tol)) {
  SystemMatrices<Scalar> sys;
  sys.r = spec.dimension;
  sys.n = spec.node_count();
  sys.m = spec.edge_count();

  const auto classes_orig = classify_nodes(spec, tol);
  sys.partition = partition_edges(spec, classes_orig);

  // Damped nodes first, stable within each class.
  sys.node_perm.reserve(static_cast<std::size_t>(sys.n));
  for (Index i = 0; i < sys.n; ++i)
    if (classes_orig[static_cast<std::size_t>(i)] == NodeClass::Damped)
      sys.node_perm.push_back(i);
  sys.n_damped = static_cast<Index>(sys.node_perm.size());
  for (Index i = 0; i < sys.n; ++i)
    if (classes_orig[static_cast<std::size_t>(i)] != NodeClass::Damped)
      sys.node_perm.push_back(i);
  sys.n_undamped = sys.n - sys.n_damped;

  sys.node_perm_inv.assign(static_cast<std::size_t>(sys.n), 0);
  for (Index i = 0; i < sys.n; ++i)
    sys.node_perm_inv[static_cast<std::size_t>(sys.node_perm[static_cast<std::size_t>(i)])] = i;

  sys.edge_perm = sys.partition.damped_damped;
  sys.edge_perm.insert(sys.edge_perm.end(), sys.partition.interconnecting.begin(),
                       sys.partition.interconnecting.end());
  sys.edge_perm.insert(sys.edge_perm.end(), sys.partition.undamped_undamped.begin(),
                       sys.partition.undamped_undamped.end());

  sys.classes.resize(static_cast<std::size_t>(sys.n));
  sys.node_ids.resize(static_cast<std::size_t>(sys.n));
  for (Index i = 0; i < sys.n; ++i) {
    const Index orig = sys.node_perm[static_cast<std::size_t>(i)];
    sys.classes[static_cast<std::size_t>(i)] = classes_orig[static_cast<std::size_t>(orig)];
    sys.node_ids[static_cast<std::size_t>(i)] = spec.nodes[static_cast<std::size_t>(orig)].id;
  }

  // Spec with permuted node and edge lists; incidence and cycle matrices are
  // built directly in the internal ordering.
  NetworkSpec<Scalar> permuted;
  permuted.dimension = sys.r;
  permuted.nodes.resize(static_cast<std::size_t>(sys.n));
  for (Index i = 0; i < sys.n; ++i)
    permuted.nodes[static_cast<std::size_t>(i)] =
        spec.nodes[static_cast<std::size_t>(sys.node_perm[static_cast<std::size_t>(i)])];
  permuted.edges.resize(static_cast<std::size_t>(sys.m));
  for (Index k = 0; k < sys.m; ++k) {
    const auto& e = spec.edges[static_cast<std::size_t>(sys.edge_perm[static_cast<std::size_t>(k)])];
    EdgeSpec<Scalar> pe;
    pe.from = sys.node_perm_inv[static_cast<std::size_t>(e.from)];
    pe.to = sys.node_perm_inv[static_cast<std::size_t>(e.to)];
    pe.weight = e.weight;
    permuted.edges[static_cast<std::size_t>(k)] = std::move(pe);
  }

  sys.incidence = incidence_matrix(permuted);
  sys.cycle = fundamental_cycle_matrix(permuted);
  sys.B_lift = kron_lift(sys.incidence, sys.r);
  sys.C_lift = kron_lift(sys.cycle, sys.r);

  const Index r = sys.r;
  sys.M = Matrix<Scalar>::Zero(r * sys.n, r * sys.n);
  sys.R = Matrix<Scalar>::Zero(r * sys.n, r * sys.n);
  sys.input = Vector<Scalar>::Zero(r * sys.n);
  for (Index i = 0; i < sys.n; ++i) {
    const auto& node = permuted.nodes[static_cast<std::size_t>(i)];
    sys.M.block(i * r, i * r, r, r) = node.mass;
    sys.R.block(i * r, i * r, r, r) = node.damping;
    sys.input.segment(i * r, r) = node.external_input;
  }
  sys.W = Matrix<Scalar>::Zero(r * sys.m, r * sys.m);
  for (Index k = 0; k < sys.m; ++k)
    sys.W.block(k * r, k * r, r, r) = permuted.edges[static_cast<std::size_t>(k)].weight;

  sys.L_total = sys.B_lift * sys.W * sys.B_lift.transpose();

  const Index nd = sys.n_damped, nu = sys.n_undamped;
  sys.L_dd = Matrix<Scalar>::Zero(r * nd, r * nd);
  sys.L_di = Matrix<Scalar>::Zero(r * nd, r * nd);
  sys.L_ii = Matrix<Scalar>::Zero(r * nd, r * nu);
  sys.L_ui = Matrix<Scalar>::Zero(r * nu, r * nu);
  sys.L_uu = Matrix<Scalar>::Zero(r * nu, r * nu);
  for (Index k = 0; k < sys.m; ++k) {
    const auto& e = permuted.edges[static_cast<std::size_t>(k)];
    const Matrix<Scalar>& w = e.weight;
    const bool from_damped = e.from < nd;
    const bool to_damped = e.to < nd;
    if (from_damped && to_damped) {
      sys.L_dd.block(e.from * r, e.from * r, r, r) += w;
      sys.L_dd.block(e.to * r, e.to * r, r, r) += w;
      sys.L_dd.block(e.from * r, e.to * r, r, r) -= w;
      sys.L_dd.block(e.to * r, e.from * r, r, r) -= w;
    } else if (!from_damped && !to_damped) {
      const Index a = e.from - nd, b = e.to - nd;
      sys.L_uu.block(a * r, a * r, r, r) += w;
      sys.L_uu.block(b * r, b * r, r, r) += w;
      sys.L_uu.block(a * r, b * r, r, r) -= w;
      sys.L_uu.block(b * r, a * r, r, r) -= w;
    } else {
      const Index d = from_damped ? e.from : e.to;
      const Index u = (from_damped ? e.to : e.from) - nd;
      sys.L_di.block(d * r, d * r, r, r) += w;
      sys.L_ui.block(u * r, u * r, r, r) += w;
      sys.L_ii.block(d * r, u * r, r, r) -= w;
    }
  }

  const Index dim = sys.state_dim();
  Eigen::LLT<Matrix<Scalar>> m_llt(sys.M);
  const Matrix<Scalar> m_inv = m_llt.solve(Matrix<Scalar>::Identity(r * sys.n, r * sys.n));
  sys.A_closed = Matrix<Scalar>::Zero(dim, dim);
  sys.A_closed.topLeftCorner(r * sys.n, r * sys.n) = -sys.R * m_inv;
  sys.A_closed.topRightCorner(r * sys.n, r * sys.m) = -sys.B_lift * sys.W;
  sys.A_closed.bottomLeftCorner(r * sys.m, r * sys.n) =
      sys.B_lift.transpose() * m_inv;
  sys.G = Matrix<Scalar>::Zero(dim, r * sys.n);
  sys.G.topRows(r * sys.n) = Matrix<Scalar>::Identity(r * sys.n, r * sys.n);
  return sys;
}

/// The unique equilibrium of the closed loop restricted to controller states
/// in the range of the lifted incidence transpose.
template <typename Scalar>
struct Equilibrium {
  Vector<Scalar> beta;   // r-vector consensus output value
  Vector<Scalar> p_bar;  // rn, internal node order
  Vector<Scalar> q_bar;  // rm, internal edge order
};

/// beta = (1^T R 1)^{-1} 1^T v with the all-ones lift; q_bar solves the
/// stacked system [B W; C^T] q = [-R 1 beta + v; 0] in least squares, which
/// realizes the intersection with the incidence range directly. Throws
/// NoDampedNode when the summed damping is singular.
template <typename Scalar, typename Derived>
Equilibrium<Scalar> equilibrium(const SystemMatrices<Scalar>& sys,
                                const Eigen::MatrixBase<Derived>& v_expr) {
  const Index r = sys.r;
  const Vector<Scalar> v = v_expr;
  if (v.size() != sys.output_dim())
    throw DimensionMismatch("external input has wrong length");

  Matrix<Scalar> damping_sum = Matrix<Scalar>::Zero(r, r);
  Vector<Scalar> input_sum = Vector<Scalar>::Zero(r);
  for (Index i = 0; i < sys.n; ++i) {
    damping_sum += sys.R.block(i * r, i * r, r, r);
    input_sum += v.segment(i * r, r);
  }
  Eigen::LLT<Matrix<Scalar>> llt(damping_sum);
  if (llt.info() != Eigen::Success)
    throw NoDampedNode("total damping is singular: the network needs at "
                       "least one damped node");
  Equilibrium<Scalar> eq;
  eq.beta = llt.solve(input_sum);

  eq.p_bar.resize(r * sys.n);
  Vector<Scalar> r_ones_beta(r * sys.n);
  for (Index i = 0; i < sys.n; ++i) {
    eq.p_bar.segment(i * r, r) = sys.M.block(i * r, i * r, r, r) * eq.beta;
    r_ones_beta.segment(i * r, r) = sys.R.block(i * r, i * r, r, r) * eq.beta;
  }

  const Index rm = r * sys.m;
  const Index cycles = sys.C_lift.cols();
  Matrix<Scalar> stacked(r * sys.n + cycles, rm);
  stacked.topRows(r * sys.n) = sys.B_lift * sys.W;
  stacked.bottomRows(cycles) = sys.C_lift.transpose();
  Vector<Scalar> rhs = Vector<Scalar>::Zero(r * sys.n + cycles);
  rhs.head(r * sys.n) = v - r_ones_beta;
  eq.q_bar = stacked.colPivHouseholderQr().solve(rhs);
  return eq;
}

template <typename Scalar>
Equilibrium<Scalar> equilibrium(const SystemMatrices<Scalar>& sys) {
  return equilibrium(sys, sys.input);
}

/// Unique splitting of a controller state into a graph part in the range of
/// the lifted incidence transpose and a cycle part: q = B^T s0 + W^{-1} C g.
template <typename Scalar>
struct ControllerDecomposition {
  Vector<Scalar> s0;          // rn potentials (minimal-norm representative)
  Vector<Scalar> gamma;       // r(m-n+1) cycle coordinates
  Vector<Scalar> graph_part;  // B^T s0 = q - W^{-1} C gamma
};

template <typename Scalar>
ControllerDecomposition<Scalar> decompose_controller_state(
    const SystemMatrices<Scalar>& sys, const Vector<Scalar>& q) {
  const Index rn = sys.r * sys.n;
  const Index rm = sys.r * sys.m;
  const Index cycles = sys.C_lift.cols();
  if (q.size() != rm)
    throw DimensionMismatch("controller state has wrong length");

  Matrix<Scalar> joint(rm, rn + cycles);
  joint.leftCols(rn) = sys.B_lift.transpose();
  Eigen::LLT<Matrix<Scalar>> w_llt(sys.W);
  joint.rightCols(cycles) = w_llt.solve(sys.C_lift);

  // Wide consistent system; the column-pivoted QR picks one representative
  // of s0, while the two subspace components themselves are unique.
  const Vector<Scalar> coeffs = joint.colPivHouseholderQr().solve(q);
  ControllerDecomposition<Scalar> dec;
  dec.s0 = coeffs.head(rn);
  dec.gamma = coeffs.tail(cycles);
  dec.graph_part = q - joint.rightCols(cycles) * dec.gamma;
  return dec;
}

/// Shifts a state so that the equilibrium sits at the origin: the cycle
/// component of the controller state is projected out first (along the
/// W^{-1}-scaled cycle space), then the equilibrium is subtracted. The
/// resulting controller block lies in the range of the lifted incidence
/// transpose.
template <typename Scalar>
Vector<Scalar> shift_to_origin(const SystemMatrices<Scalar>& sys,
                               const Equilibrium<Scalar>& eq,
                               const Vector<Scalar>& z0) {
  const Index rn = sys.r * sys.n;
  const Index rm = sys.r * sys.m;
  if (z0.size() != rn + rm)
    throw DimensionMismatch("state has wrong length");
  const auto dec = decompose_controller_state(sys, Vector<Scalar>(z0.tail(rm)));
  Vector<Scalar> shifted(rn + rm);
  shifted.head(rn) = z0.head(rn) - eq.p_bar;
  shifted.tail(rm) = dec.graph_part - eq.q_bar;
  return shifted;
}

/// Kron-reduced view of the network over the (partially) undamped nodes,
/// together with the observability pairs that characterize the steady state.
/// State conventions: (A_hat, C_hat, C_hat_ext, Q_hat) act on stacked
/// (velocity, position) coordinates of the undamped nodes; (A_breve,
/// C_breve, Q_breve) act on stacked (momentum, controller) coordinates.
template <typename Scalar>
struct ReducedSystem {
  Index r = 1;
  Index n_damped = 0;
  Index n_undamped = 0;
  Index m = 0;  // edges of the original graph
  std::vector<std::string> undamped_ids;  // reduced node order

  Matrix<Scalar> L_tilde_u;  // Kron-reduced total Laplacian
  Matrix<Scalar> M_u, R_u;   // undamped inertia / damping blocks
  Matrix<Scalar> L_ii;       // damped-by-undamped coupling block

  Matrix<Scalar> A_hat;      // [[0, -M_u^{-1} Lt_u], [I, 0]]
  Matrix<Scalar> C_hat;      // [[L_ii, 0], [R_u, 0]]
  Matrix<Scalar> C_hat_ext;  // C_hat plus the momentum row [0, 1^T M_u]
  Matrix<Scalar> Q_hat;      // lift back to (p_d, p_u, q) coordinates

  Matrix<Scalar> A_breve;  // [[0, -B_u W], [B_u^T M_u^{-1}, 0]]
  Matrix<Scalar> C_breve;  // [[0, B_d W], [R_u M_u^{-1}, 0], [0, C^T]]
  Matrix<Scalar> Q_breve;  // prepend a zero damped-momentum block

  Index hat_dim() const { return 2 * r * n_undamped; }
};

/// Schur complement of the damped block of the total Laplacian (Kron
/// reduction) and the reduced observability pairs. Throws
/// SingularDampedBlock when the damped diagonal block cannot be factored,
/// which signals a disconnected damped component.
template <typename Scalar>
ReducedSystem<Scalar> kron_reduce(const SystemMatrices<Scalar>& sys) {
  const Index r = sys.r;
  const Index nd = sys.n_damped, nu = sys.n_undamped;
  const Index rd = r * nd, ru = r * nu, rm = r * sys.m;

  ReducedSystem<Scalar> red;
  red.r = r;
  red.n_damped = nd;
  red.n_undamped = nu;
  red.m = sys.m;
  red.undamped_ids.assign(sys.node_ids.begin() + static_cast<std::ptrdiff_t>(nd),
                          sys.node_ids.end());
  red.M_u = sys.M_u();
  red.R_u = sys.R_u();
  red.L_ii = sys.L_ii;

  const Matrix<Scalar> damped = sys.damped_block();
  Eigen::LLT<Matrix<Scalar>> llt(damped);
  if (llt.info() != Eigen::Success)
    throw SingularDampedBlock("damped block of the Laplacian is singular");
  const Matrix<Scalar> solved = llt.solve(sys.L_ii);  // (L_d)^{-1} L_ii
  red.L_tilde_u = sys.undamped_block() - sys.L_ii.transpose() * solved;

  Eigen::LLT<Matrix<Scalar>> mu_llt(red.M_u);
  const Matrix<Scalar> mu_inv = mu_llt.solve(Matrix<Scalar>::Identity(ru, ru));

  red.A_hat = Matrix<Scalar>::Zero(2 * ru, 2 * ru);
  red.A_hat.topRightCorner(ru, ru) = -mu_inv * red.L_tilde_u;
  red.A_hat.bottomLeftCorner(ru, ru) = Matrix<Scalar>::Identity(ru, ru);

  red.C_hat = Matrix<Scalar>::Zero(rd + ru, 2 * ru);
  red.C_hat.topLeftCorner(rd, ru) = sys.L_ii;
  red.C_hat.block(rd, 0, ru, ru) = red.R_u;

  red.C_hat_ext = Matrix<Scalar>::Zero(rd + ru + r, 2 * ru);
  red.C_hat_ext.topRows(rd + ru) = red.C_hat;
  const Matrix<Scalar> ones_u = SystemMatrices<Scalar>::ones_lift(nu, r);
  red.C_hat_ext.block(rd + ru, ru, r, ru) = ones_u.transpose() * red.M_u;

  const Matrix<Scalar> b_d = sys.B_lift.topRows(rd);
  const Matrix<Scalar> b_u = sys.B_lift.bottomRows(ru);
  red.Q_hat = Matrix<Scalar>::Zero(rd + ru + rm, 2 * ru);
  red.Q_hat.block(rd, 0, ru, ru) = red.M_u;
  red.Q_hat.block(rd + ru, ru, rm, ru) =
      b_u.transpose() - b_d.transpose() * solved;

  red.A_breve = Matrix<Scalar>::Zero(ru + rm, ru + rm);
  red.A_breve.topRightCorner(ru, rm) = -b_u * sys.W;
  red.A_breve.bottomLeftCorner(rm, ru) = b_u.transpose() * mu_inv;

  const Index cycles = sys.C_lift.cols();
  red.C_breve = Matrix<Scalar>::Zero(rd + ru + cycles, ru + rm);
  red.C_breve.topRightCorner(rd, rm) = b_d * sys.W;
  red.C_breve.block(rd, 0, ru, ru) = red.R_u * mu_inv;
  red.C_breve.bottomRightCorner(cycles, rm) = sys.C_lift.transpose();

  red.Q_breve = Matrix<Scalar>::Zero(rd + ru + rm, ru + rm);
  red.Q_breve.bottomRows(ru + rm) =
      Matrix<Scalar>::Identity(ru + rm, ru + rm);
  return red;
}

}  // namespace netcons
