#pragma once

#include <algorithm>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "netcons/types.hpp"

namespace netcons {

template <typename Scalar>
struct NodeSpec {
  std::string id;
  Matrix<Scalar> mass;            // r x r, symmetric positive definite
  Matrix<Scalar> damping;         // r x r, symmetric positive semidefinite
  Vector<Scalar> external_input;  // length r
};

template <typename Scalar>
struct EdgeSpec {
  Index from = -1;
  Index to = -1;
  Matrix<Scalar> weight;  // r x r, symmetric positive definite
};

/// Description of an undirected coupled network: graph topology plus
/// per-node inertia/damping blocks, per-edge weight blocks and a constant
/// external input. Call validate() before handing a spec to the assembly
/// or analysis routines.
template <typename Scalar>
struct NetworkSpec {
  Index dimension = 1;  // spatial dimension r of each node state
  std::vector<NodeSpec<Scalar>> nodes;
  std::vector<EdgeSpec<Scalar>> edges;

  Index node_count() const { return static_cast<Index>(nodes.size()); }
  Index edge_count() const { return static_cast<Index>(edges.size()); }
};

enum class NodeClass { Damped, Undamped, PartiallyUndamped };

/// Edge indices split by the damping class of their endpoints.
struct EdgePartition {
  std::vector<Index> damped_damped;      // both endpoints damped
  std::vector<Index> interconnecting;    // one damped, one (partially) undamped
  std::vector<Index> undamped_undamped;  // both endpoints (partially) undamped
};

namespace detail {

// Adjacency lists with neighbor order by node index, then edge index.
template <typename Scalar>
std::vector<std::vector<std::pair<Index, Index>>> adjacency(
    const NetworkSpec<Scalar>& spec) {
  std::vector<std::vector<std::pair<Index, Index>>> adj(spec.node_count());
  for (Index k = 0; k < spec.edge_count(); ++k) {
    const auto& e = spec.edges[static_cast<std::size_t>(k)];
    adj[static_cast<std::size_t>(e.from)].emplace_back(e.to, k);
    adj[static_cast<std::size_t>(e.to)].emplace_back(e.from, k);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

template <typename Scalar>
bool is_connected(const NetworkSpec<Scalar>& spec) {
  const Index n = spec.node_count();
  if (n == 0) return false;
  const auto adj = adjacency(spec);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::queue<Index> frontier;
  frontier.push(0);
  seen[0] = 1;
  Index reached = 1;
  while (!frontier.empty()) {
    const Index v = frontier.front();
    frontier.pop();
    for (const auto& [w, k] : adj[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = 1;
        ++reached;
        frontier.push(w);
      }
    }
  }
  return reached == n;
}

template <typename Scalar>
bool is_symmetric(const Matrix<Scalar>& a, Scalar tol) {
  if (a.rows() != a.cols()) return false;
  const Scalar scale = std::max<Scalar>(a.template lpNorm<Eigen::Infinity>(),
                                        Scalar(defaults::abs_floor));
  return (a - a.transpose()).template lpNorm<Eigen::Infinity>() <= tol * scale;
}

template <typename Scalar>
bool is_spd(const Matrix<Scalar>& a, Scalar tol) {
  if (!is_symmetric(a, tol)) return false;
  Eigen::LLT<Matrix<Scalar>> llt(a);
  return llt.info() == Eigen::Success &&
         a.diagonal().minCoeff() > Scalar(0);
}

template <typename Scalar>
bool is_psd(const Matrix<Scalar>& a, Scalar tol) {
  if (!is_symmetric(a, tol)) return false;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(a,
                                                   Eigen::EigenvaluesOnly);
  const Scalar scale =
      std::max<Scalar>(es.eigenvalues().cwiseAbs().maxCoeff(), Scalar(1));
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

}  // namespace detail

/// One class per node, in input order. A node is damped when its damping
/// block is positive definite, undamped when the block vanishes, and
/// partially undamped when the block is singular but nonzero.
template <typename Scalar>
std::vector<NodeClass> classify_nodes(const NetworkSpec<Scalar>& spec,
                                      Scalar tol = Scalar(defaults::rank_tol)) {
  std::vector<NodeClass> classes;
  classes.reserve(spec.nodes.size());
  for (const auto& node : spec.nodes) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(node.damping,
                                                     Eigen::EigenvaluesOnly);
    const Scalar lambda_max = es.eigenvalues().maxCoeff();
    const Scalar lambda_min = es.eigenvalues().minCoeff();
    if (lambda_max <= tol) {
      classes.push_back(NodeClass::Undamped);
    } else if (lambda_min > tol * lambda_max) {
      classes.push_back(NodeClass::Damped);
    } else {
      classes.push_back(NodeClass::PartiallyUndamped);
    }
  }
  return classes;
}

template <typename Scalar>
EdgePartition partition_edges(const NetworkSpec<Scalar>& spec,
                              const std::vector<NodeClass>& classes) {
  EdgePartition part;
  for (Index k = 0; k < spec.edge_count(); ++k) {
    const auto& e = spec.edges[static_cast<std::size_t>(k)];
    const bool from_damped =
        classes[static_cast<std::size_t>(e.from)] == NodeClass::Damped;
    const bool to_damped =
        classes[static_cast<std::size_t>(e.to)] == NodeClass::Damped;
    if (from_damped && to_damped) {
      part.damped_damped.push_back(k);
    } else if (!from_damped && !to_damped) {
      part.undamped_undamped.push_back(k);
    } else {
      part.interconnecting.push_back(k);
    }
  }
  return part;
}

/// Checks every structural invariant of a spec and throws ValidationError
/// with a message naming the violated invariant. This includes the analysis
/// precondition that the network contains at least one damped and at least
/// one (partially) undamped node.
template <typename Scalar>
void validate(const NetworkSpec<Scalar>& spec,
              Scalar tol = Scalar(defaults::rank_tol)) {
  const Index r = spec.dimension;
  if (r < 1) throw ValidationError("dimension must be a positive integer");
  if (spec.nodes.empty()) throw ValidationError("network has no nodes");

  std::set<std::string> ids;
  for (const auto& node : spec.nodes) {
    if (!ids.insert(node.id).second)
      throw ValidationError("duplicate node id \"" + node.id + "\"");
    if (node.mass.rows() != r || node.mass.cols() != r)
      throw ValidationError("mass matrix of node \"" + node.id +
                            "\" must be " + std::to_string(r) + "x" +
                            std::to_string(r));
    if (node.damping.rows() != r || node.damping.cols() != r)
      throw ValidationError("damping matrix of node \"" + node.id +
                            "\" must be " + std::to_string(r) + "x" +
                            std::to_string(r));
    if (node.external_input.size() != r)
      throw ValidationError("external input of node \"" + node.id +
                            "\" must have length " + std::to_string(r));
    if (!detail::is_spd(node.mass, tol))
      throw ValidationError("mass matrix of node \"" + node.id +
                            "\" is not symmetric positive definite");
    if (!detail::is_psd(node.damping, tol))
      throw ValidationError("damping matrix of node \"" + node.id +
                            "\" is not symmetric positive semidefinite");
  }

  std::set<std::pair<Index, Index>> seen_pairs;
  for (Index k = 0; k < spec.edge_count(); ++k) {
    const auto& e = spec.edges[static_cast<std::size_t>(k)];
    if (e.from < 0 || e.from >= spec.node_count() || e.to < 0 ||
        e.to >= spec.node_count())
      throw ValidationError("edge " + std::to_string(k) +
                            " references an unknown node");
    if (e.from == e.to)
      throw ValidationError("self-loop on node \"" +
                            spec.nodes[static_cast<std::size_t>(e.from)].id +
                            "\"");
    const auto key = std::minmax(e.from, e.to);
    if (!seen_pairs.insert(key).second)
      throw ValidationError("parallel edge between \"" +
                            spec.nodes[static_cast<std::size_t>(e.from)].id +
                            "\" and \"" +
                            spec.nodes[static_cast<std::size_t>(e.to)].id +
                            "\"");
    if (e.weight.rows() != r || e.weight.cols() != r)
      throw ValidationError("weight matrix of edge " + std::to_string(k) +
                            " must be " + std::to_string(r) + "x" +
                            std::to_string(r));
    if (!detail::is_spd(e.weight, tol))
      throw ValidationError("weight matrix of edge " + std::to_string(k) +
                            " is not symmetric positive definite");
  }

  if (!detail::is_connected(spec))
    throw ValidationError("graph is not connected");

  const auto classes = classify_nodes(spec, tol);
  const bool any_damped = std::any_of(
      classes.begin(), classes.end(),
      [](NodeClass c) { return c == NodeClass::Damped; });
  const bool any_undamped = std::any_of(
      classes.begin(), classes.end(),
      [](NodeClass c) { return c != NodeClass::Damped; });
  if (!any_damped || !any_undamped)
    throw ValidationError(
        "network must contain at least one damped and at least one "
        "(partially) undamped node");
}

/// Node-by-edge incidence matrix with +1 at the from endpoint and -1 at the
/// to endpoint of every edge. Throws DisconnectedGraph when the graph does
/// not have rank n-1.
template <typename Scalar>
Matrix<Scalar> incidence_matrix(const NetworkSpec<Scalar>& spec) {
  if (!detail::is_connected(spec))
    throw DisconnectedGraph("graph is not connected");
  Matrix<Scalar> b = Matrix<Scalar>::Zero(spec.node_count(),
                                          spec.edge_count());
  for (Index k = 0; k < spec.edge_count(); ++k) {
    const auto& e = spec.edges[static_cast<std::size_t>(k)];
    b(e.from, k) = Scalar(1);
    b(e.to, k) = Scalar(-1);
  }
  return b;
}

/// Fundamental cycle matrix C with B*C = 0 exactly and entries in {-1,0,1}.
/// Built from a BFS spanning tree rooted at node 0 with neighbors visited by
/// index, one column per chord; trees yield an m x 0 matrix.
template <typename Scalar>
Matrix<Scalar> fundamental_cycle_matrix(const NetworkSpec<Scalar>& spec) {
  const Index n = spec.node_count();
  const Index m = spec.edge_count();
  if (!detail::is_connected(spec))
    throw DisconnectedGraph("graph is not connected");

  const auto adj = detail::adjacency(spec);
  std::vector<Index> parent(static_cast<std::size_t>(n), -1);
  std::vector<Index> parent_edge(static_cast<std::size_t>(n), -1);
  std::vector<Index> depth(static_cast<std::size_t>(n), 0);
  std::vector<char> in_tree(static_cast<std::size_t>(m), 0);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);

  std::queue<Index> frontier;
  frontier.push(0);
  seen[0] = 1;
  while (!frontier.empty()) {
    const Index v = frontier.front();
    frontier.pop();
    for (const auto& [w, k] : adj[static_cast<std::size_t>(v)]) {
      if (seen[static_cast<std::size_t>(w)]) continue;
      seen[static_cast<std::size_t>(w)] = 1;
      parent[static_cast<std::size_t>(w)] = v;
      parent_edge[static_cast<std::size_t>(w)] = k;
      depth[static_cast<std::size_t>(w)] =
          depth[static_cast<std::size_t>(v)] + 1;
      in_tree[static_cast<std::size_t>(k)] = 1;
      frontier.push(w);
    }
  }

  // Walking from a child to its parent follows the edge orientation exactly
  // when the child is the edge's from endpoint.
  const auto step_coeff = [&](Index child) {
    const auto& e =
        spec.edges[static_cast<std::size_t>(
            parent_edge[static_cast<std::size_t>(child)])];
    return e.from == child ? Scalar(1) : Scalar(-1);
  };

  Matrix<Scalar> cycles = Matrix<Scalar>::Zero(m, m - n + 1);
  Index col = 0;
  for (Index k = 0; k < m; ++k) {
    if (in_tree[static_cast<std::size_t>(k)]) continue;
    const auto& chord = spec.edges[static_cast<std::size_t>(k)];
    cycles(k, col) = Scalar(1);
    // Close the cycle with the tree path from the chord's to endpoint back
    // to its from endpoint.
    Index x = chord.to;
    Index y = chord.from;
    while (depth[static_cast<std::size_t>(x)] >
           depth[static_cast<std::size_t>(y)]) {
      cycles(parent_edge[static_cast<std::size_t>(x)], col) = step_coeff(x);
      x = parent[static_cast<std::size_t>(x)];
    }
    while (depth[static_cast<std::size_t>(y)] >
           depth[static_cast<std::size_t>(x)]) {
      cycles(parent_edge[static_cast<std::size_t>(y)], col) = -step_coeff(y);
      y = parent[static_cast<std::size_t>(y)];
    }
    while (x != y) {
      cycles(parent_edge[static_cast<std::size_t>(x)], col) = step_coeff(x);
      cycles(parent_edge[static_cast<std::size_t>(y)], col) = -step_coeff(y);
      x = parent[static_cast<std::size_t>(x)];
      y = parent[static_cast<std::size_t>(y)];
    }
    ++col;
  }
  return cycles;
}

/// X kron I_r: every scalar entry becomes entry * I_r.
template <typename Derived>
Matrix<typename Derived::Scalar> kron_lift(
    const Eigen::MatrixBase<Derived>& x, Index r) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> lifted = Matrix<Scalar>::Zero(x.rows() * r, x.cols() * r);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j)
      if (x(i, j) != Scalar(0))
        lifted.block(i * r, j * r, r, r) =
            x(i, j) * Matrix<Scalar>::Identity(r, r);
  return lifted;
}

}  // namespace netcons
