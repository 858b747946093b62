#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <netcons/graph.hpp>

#include "support/fixtures.hpp"
#include "support/random_network.hpp"

using namespace netcons;
using fixtures::scalar_spec;

namespace {
Eigen::Index matrix_rank(const Eigen::MatrixXd& a) {
  if (a.cols() == 0 || a.rows() == 0) return 0;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-9);
  return qr.rank();
}
}  // namespace

TEST_CASE("node classification on the three canonical damping blocks") {
  auto spec = scalar_spec({0, 1}, {{0, 1}});
  auto classes = classify_nodes(spec, 1e-9);
  CHECK(classes[0] == NodeClass::Undamped);
  CHECK(classes[1] == NodeClass::Damped);

  NetworkSpec<double> spec2;
  spec2.dimension = 2;
  NodeSpec<double> a{"a", Eigen::MatrixXd::Identity(2, 2),
                     Eigen::Vector2d(1, 0).asDiagonal().toDenseMatrix(),
                     Eigen::VectorXd::Zero(2)};
  spec2.nodes.push_back(a);
  CHECK(classify_nodes(spec2, 1e-9)[0] == NodeClass::PartiallyUndamped);
}

TEST_CASE("classification is invariant under node reordering") {
  testsupport::SpecSampler sampler(71);
  for (int trial = 0; trial < 30; ++trial) {
    auto spec = sampler.sample();
    const int n = static_cast<int>(spec.node_count());
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), sampler.engine());
    auto permuted = testsupport::permute_nodes(spec, perm);

    auto classes = classify_nodes(spec, 1e-9);
    auto classes_p = classify_nodes(permuted, 1e-9);
    for (int i = 0; i < n; ++i)
      CHECK(classes[static_cast<std::size_t>(i)] ==
            classes_p[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }
}

TEST_CASE("incidence matrix follows the from/to sign convention") {
  auto single = scalar_spec({1, 0}, {{0, 1}});
  Eigen::MatrixXd b = incidence_matrix(single);
  CHECK(b.rows() == 2);
  CHECK(b(0, 0) == 1.0);
  CHECK(b(1, 0) == -1.0);

  auto path = scalar_spec({0, 1, 0}, {{0, 1}, {1, 2}});
  Eigen::MatrixXd bp = incidence_matrix(path);
  Eigen::MatrixXd expected(3, 2);
  expected << 1, 0, -1, 1, 0, -1;
  CHECK((bp - expected).norm() == 0.0);

  auto tri = fixtures::triangle();
  CHECK(matrix_rank(incidence_matrix(tri)) == 2);
}

TEST_CASE("disconnected graphs are rejected") {
  auto spec = scalar_spec({1, 0, 0, 0}, {{0, 1}, {2, 3}});
  CHECK_THROWS_AS(incidence_matrix(spec), DisconnectedGraph);
  CHECK_THROWS_AS(validate(spec), ValidationError);
}

TEST_CASE("fundamental cycle matrix of a tree is empty") {
  auto path = fixtures::p3_mid();
  Eigen::MatrixXd c = fundamental_cycle_matrix(path);
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 0);
}

TEST_CASE("triangle cycle column matches the sign-pattern enumeration") {
  auto tri = fixtures::triangle();
  Eigen::MatrixXd b = incidence_matrix(tri);
  Eigen::MatrixXd c = fundamental_cycle_matrix(tri);
  REQUIRE(c.cols() == 1);

  // Oracle: enumerate all nonzero sign patterns with B * c = 0 exactly.
  std::vector<Eigen::Vector3d> valid;
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j)
      for (int k = -1; k <= 1; ++k) {
        Eigen::Vector3d cand(i, j, k);
        if (cand.isZero()) continue;
        if ((b * cand).norm() == 0.0) valid.push_back(cand);
      }
  REQUIRE(valid.size() == 2);  // one cycle, two orientations
  const bool matches = (c.col(0) - valid[0]).norm() == 0.0 ||
                       (c.col(0) - valid[1]).norm() == 0.0;
  CHECK(matches);
}

TEST_CASE("kron lift definition") {
  Eigen::MatrixXd one(1, 1);
  one << 1;
  CHECK((kron_lift(one, 1) - one).norm() == 0.0);

  Eigen::MatrixXd row(1, 2);
  row << 1, -1;
  Eigen::MatrixXd lifted = kron_lift(row, 2);
  Eigen::MatrixXd expected(2, 4);
  expected << 1, 0, -1, 0, 0, 1, 0, -1;
  CHECK((lifted - expected).norm() == 0.0);
}

TEST_CASE("graph structure properties on random connected networks") {
  testsupport::SpecSampler sampler(2024);
  for (int trial = 0; trial < 50; ++trial) {
    auto spec = sampler.sample();
    const Eigen::Index n = spec.node_count();
    const Eigen::Index m = spec.edge_count();
    Eigen::MatrixXd b = incidence_matrix(spec);
    Eigen::MatrixXd c = fundamental_cycle_matrix(spec);

    // B C = 0 exactly: every column telescopes a closed walk of +-1 entries.
    if (c.cols() > 0) CHECK((b * c).cwiseAbs().maxCoeff() == 0.0);
    CHECK(matrix_rank(c) == m - n + 1);
    CHECK(matrix_rank(b) == n - 1);
    CHECK((b.transpose() * Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff() ==
          0.0);

    // The transposed incidence range and the cycle space are complementary.
    Eigen::MatrixXd joint(m, n + c.cols());
    joint.leftCols(n) = b.transpose();
    joint.rightCols(c.cols()) = c;
    CHECK(matrix_rank(joint) == m);

    // Lifting multiplies the rank by r.
    CHECK(matrix_rank(kron_lift(b, 2)) == 2 * (n - 1));
  }
}

TEST_CASE("validation names the violated invariant") {
  auto good = fixtures::p3_mid();
  CHECK_NOTHROW(validate(good));

  auto bad_mass = good;
  bad_mass.nodes[0].mass = fixtures::m1(-1.0);
  CHECK_THROWS_WITH_AS(validate(bad_mass),
                       doctest::Contains("not symmetric positive definite"),
                       ValidationError);

  auto bad_damping = good;
  bad_damping.nodes[1].damping = fixtures::m1(-0.5);
  CHECK_THROWS_WITH_AS(validate(bad_damping),
                       doctest::Contains("positive semidefinite"),
                       ValidationError);

  auto bad_weight = good;
  bad_weight.edges[0].weight = fixtures::m1(0.0);
  CHECK_THROWS_WITH_AS(validate(bad_weight),
                       doctest::Contains("weight"), ValidationError);

  auto dup = good;
  dup.nodes[2].id = dup.nodes[0].id;
  CHECK_THROWS_WITH_AS(validate(dup), doctest::Contains("duplicate"),
                       ValidationError);

  auto self_loop = good;
  self_loop.edges[1].to = self_loop.edges[1].from;
  CHECK_THROWS_WITH_AS(validate(self_loop), doctest::Contains("self-loop"),
                       ValidationError);

  CHECK_THROWS_WITH_AS(validate(fixtures::all_damped_p2()),
                       doctest::Contains("at least one damped and at least "
                                         "one (partially) undamped"),
                       ValidationError);

  auto no_damped = scalar_spec({0, 0}, {{0, 1}});
  CHECK_THROWS_AS(validate(no_damped), ValidationError);

  auto parallel = scalar_spec({1, 0}, {{0, 1}, {1, 0}});
  CHECK_THROWS_WITH_AS(validate(parallel), doctest::Contains("parallel"),
                       ValidationError);
}
