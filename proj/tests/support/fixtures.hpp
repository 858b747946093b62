#pragma once

#include <string>
#include <utility>
#include <vector>

#include <netcons/graph.hpp>

// Small hand-checkable networks used across the test suites.
namespace fixtures {

using Spec = netcons::NetworkSpec<double>;

inline Eigen::MatrixXd m1(double v) {
  Eigen::MatrixXd m(1, 1);
  m << v;
  return m;
}

inline Eigen::VectorXd v1(double v) {
  Eigen::VectorXd x(1);
  x << v;
  return x;
}

/// Scalar (r = 1) network from per-node damping values and an edge list.
/// Masses and weights default to one, external input to zero.
inline Spec scalar_spec(const std::vector<double>& damping,
                        const std::vector<std::pair<int, int>>& edges,
                        std::vector<double> weights = {},
                        std::vector<double> masses = {},
                        std::vector<double> inputs = {}) {
  Spec spec;
  spec.dimension = 1;
  if (weights.empty()) weights.assign(edges.size(), 1.0);
  if (masses.empty()) masses.assign(damping.size(), 1.0);
  if (inputs.empty()) inputs.assign(damping.size(), 0.0);
  for (std::size_t i = 0; i < damping.size(); ++i) {
    netcons::NodeSpec<double> node;
    node.id = std::to_string(i + 1);
    node.mass = m1(masses[i]);
    node.damping = m1(damping[i]);
    node.external_input = v1(inputs[i]);
    spec.nodes.push_back(std::move(node));
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    netcons::EdgeSpec<double> edge;
    edge.from = edges[k].first;
    edge.to = edges[k].second;
    edge.weight = m1(weights[k]);
    spec.edges.push_back(std::move(edge));
  }
  return spec;
}

/// Path 1-2-3 with unit parameters and the middle node damped: the canonical
/// oscillatory counterexample (one mode at frequency 1).
inline Spec p3_mid() { return scalar_spec({0, 1, 0}, {{0, 1}, {1, 2}}); }

/// Path 1-2-3 with the first node damped: consensus with beta = 3 under the
/// input (3, 0, 0).
inline Spec p3_end() {
  return scalar_spec({1, 0, 0}, {{0, 1}, {1, 2}}, {}, {}, {3, 0, 0});
}

/// Two nodes, one damped.
inline Spec p2() { return scalar_spec({1, 0}, {{0, 1}}); }

/// Triangle with one damped node.
inline Spec triangle() {
  return scalar_spec({1, 0, 0}, {{0, 1}, {1, 2}, {0, 2}});
}

/// Path of five with the middle node damped: two oscillation modes at the
/// golden-ratio frequencies sqrt((3 -+ sqrt(5)) / 2).
inline Spec p5_mid() {
  return scalar_spec({0, 0, 1, 0, 0}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
}

/// Complete graph on three nodes with one damped node: symmetric enough to
/// oscillate despite full connectivity.
inline Spec k3_one_damped() {
  return scalar_spec({1, 0, 0}, {{0, 1}, {1, 2}, {0, 2}});
}

inline Spec all_damped_p2() { return scalar_spec({1, 1}, {{0, 1}}); }

}  // namespace fixtures
