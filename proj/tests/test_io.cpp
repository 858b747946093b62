#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <netcons/analysis.hpp>
#include <netcons/cli.hpp>
#include <netcons/io.hpp>
#include <netcons/simulate.hpp>

#include "support/fixtures.hpp"
#include "support/random_network.hpp"

using namespace netcons;

namespace {

std::string spec_to_json(const NetworkSpec<double>& spec) {
  std::string out = "{\"dimension\":" + std::to_string(spec.dimension);
  out += ",\"nodes\":[";
  for (Index i = 0; i < spec.node_count(); ++i) {
    const auto& node = spec.nodes[static_cast<std::size_t>(i)];
    if (i) out += ",";
    out += "{\"id\":\"" + node.id + "\",\"mass\":[";
    for (Index a = 0; a < spec.dimension; ++a) {
      if (a) out += ",";
      out += "[";
      for (Index b = 0; b < spec.dimension; ++b) {
        if (b) out += ",";
        out += io::format_number(node.mass(a, b));
      }
      out += "]";
    }
    out += "],\"damping\":[";
    for (Index a = 0; a < spec.dimension; ++a) {
      if (a) out += ",";
      out += "[";
      for (Index b = 0; b < spec.dimension; ++b) {
        if (b) out += ",";
        out += io::format_number(node.damping(a, b));
      }
      out += "]";
    }
    out += "],\"external_input\":[";
    for (Index a = 0; a < spec.dimension; ++a) {
      if (a) out += ",";
      out += io::format_number(node.external_input(a));
    }
    out += "]}";
  }
  out += "],\"edges\":[";
  for (Index k = 0; k < spec.edge_count(); ++k) {
    const auto& e = spec.edges[static_cast<std::size_t>(k)];
    if (k) out += ",";
    out += "{\"from\":\"" + spec.nodes[static_cast<std::size_t>(e.from)].id +
           "\",\"to\":\"" + spec.nodes[static_cast<std::size_t>(e.to)].id +
           "\",\"weight\":[";
    for (Index a = 0; a < spec.dimension; ++a) {
      if (a) out += ",";
      out += "[";
      for (Index b = 0; b < spec.dimension; ++b) {
        if (b) out += ",";
        out += io::format_number(e.weight(a, b));
      }
      out += "]";
    }
    out += "]}";
  }
  out += "]}";
  return out;
}

std::string write_temp(const std::string& contents, const std::string& name) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out << contents;
  return path.string();
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("network JSON parses and analyzes") {
  const std::string text = spec_to_json(fixtures::p3_mid());
  auto spec = io::parse_network(text);
  validate(spec);
  auto report = analyze(spec);
  CHECK_FALSE(report.consensus);
  CHECK(report.oscillation_dim == 2);
}

TEST_CASE("schema violations name the offending field") {
  CHECK_THROWS_WITH_AS(io::parse_network("not json"),
                       doctest::Contains("invalid JSON"), ValidationError);
  CHECK_THROWS_WITH_AS(io::parse_network("{\"nodes\":[],\"edges\":[]}"),
                       doctest::Contains("dimension"), ValidationError);
  CHECK_THROWS_WITH_AS(
      io::parse_network(
          "{\"dimension\":1,\"nodes\":[{\"id\":\"a\",\"mass\":[[1,0]],"
          "\"damping\":[[0]],\"external_input\":[0]}],\"edges\":[]}"),
      doctest::Contains("mass"), ValidationError);
  CHECK_THROWS_WITH_AS(
      io::parse_network(
          "{\"dimension\":1,\"nodes\":[{\"id\":\"a\",\"mass\":[[1]],"
          "\"damping\":[[0]],\"external_input\":[0]}],"
          "\"edges\":[{\"from\":\"a\",\"to\":\"zz\",\"weight\":[[1]]}]}"),
      doctest::Contains("unknown node id"), ValidationError);
}

TEST_CASE("floats are serialized with 17 significant digits") {
  CHECK(io::format_number(1.0 / 3.0) == "0.33333333333333331");
  CHECK(io::format_number(3.0) == "3");
  std::mt19937_64 gen(3);
  std::normal_distribution<double> dist;
  for (int i = 0; i < 200; ++i) {
    const double x = dist(gen) * std::pow(10.0, static_cast<int>(gen() % 13) - 6);
    CHECK(std::stod(io::format_number(x)) == x);  // lossless round trip
  }
}

TEST_CASE("analyze exit codes distinguish outcome from failure") {
  const std::string mid =
      write_temp(spec_to_json(fixtures::p3_mid()), "netcons_mid.json");
  const std::string end =
      write_temp(spec_to_json(fixtures::p3_end()), "netcons_end.json");
  const std::string all_damped = write_temp(
      spec_to_json(fixtures::all_damped_p2()), "netcons_alldamped.json");

  auto r_end = run_cli({"analyze", end});
  CHECK(r_end.code == 0);
  CHECK(r_end.out.find("\"consensus\":true") != std::string::npos);
  CHECK(r_end.out.find("\"beta\":[3]") != std::string::npos);

  auto r_mid = run_cli({"analyze", mid});
  CHECK(r_mid.code == 3);
  CHECK(r_mid.out.find("\"consensus\":false") != std::string::npos);
  CHECK(r_mid.out.find("\"oscillation_dim\":2") != std::string::npos);
  CHECK(r_mid.out.find("\"frequency\":0.99999999999999989") !=
        std::string::npos);

  auto r_bad = run_cli({"analyze", all_damped});
  CHECK(r_bad.code == 2);
  CHECK(r_bad.err.find("at least one damped and at least one (partially) "
                       "undamped node") != std::string::npos);

  CHECK(run_cli({"analyze", "/nonexistent/net.json"}).code == 2);
  const std::string garbage = write_temp("{]", "netcons_garbage.json");
  CHECK(run_cli({"analyze", garbage}).code == 2);
}

TEST_CASE("analysis output bytes are deterministic") {
  const std::string mid =
      write_temp(spec_to_json(fixtures::p3_mid()), "netcons_det.json");
  auto first = run_cli({"analyze", mid});
  auto second = run_cli({"analyze", mid});
  CHECK(first.code == 3);
  CHECK(first.out == second.out);
}

TEST_CASE("simulate writes a deterministic CSV trace") {
  const std::string mid =
      write_temp(spec_to_json(fixtures::p3_mid()), "netcons_sim.json");
  const auto trace_a =
      (std::filesystem::temp_directory_path() / "netcons_a.csv").string();
  const auto trace_b =
      (std::filesystem::temp_directory_path() / "netcons_b.csv").string();

  auto ra = run_cli({"simulate", mid, "--t-end", "20", "--seed", "9",
                     "--out", trace_a});
  auto rb = run_cli({"simulate", mid, "--t-end", "20", "--seed", "9",
                     "--out", trace_b});
  CHECK(ra.code == 0);
  CHECK(ra.out == rb.out);
  CHECK(ra.out.find("\"classification\":\"oscillatory\"") !=
        std::string::npos);

  std::ifstream fa(trace_a), fb(trace_b);
  std::stringstream ba, bb;
  ba << fa.rdbuf();
  bb << fb.rdbuf();
  CHECK(ba.str() == bb.str());
  CHECK(ba.str().substr(0, 14) == "t,y_1,y_2,y_3,");
  CHECK(ba.str().find("U\n") != std::string::npos);
}

TEST_CASE("simulate accepts an explicit initial state") {
  const std::string end =
      write_temp(spec_to_json(fixtures::p3_end()), "netcons_init.json");
  // Start exactly at the equilibrium: p = M 1 beta = (3,3,3), q = 0.
  const std::string init = write_temp(
      "{\"p\":[3,3,3],\"q\":[0,0]}", "netcons_init_state.json");
  auto r = run_cli({"simulate", end, "--t-end", "30", "--init", init});
  CHECK(r.code == 0);
  CHECK(r.out.find("\"classification\":\"consensus\"") != std::string::npos);
  CHECK(r.out.find("\"beta_hat\":[3") != std::string::npos);
}

TEST_CASE("verify agrees with itself on both branches") {
  const std::string mid =
      write_temp(spec_to_json(fixtures::p3_mid()), "netcons_v1.json");
  const std::string end =
      write_temp(spec_to_json(fixtures::p3_end()), "netcons_v2.json");
  auto r_mid = run_cli({"verify", mid, "--runs", "2"});
  CHECK(r_mid.code == 0);
  CHECK(r_mid.out.find("\"all_agree\":true") != std::string::npos);
  auto r_end = run_cli({"verify", end, "--runs", "2"});
  CHECK(r_end.code == 0);
}

TEST_CASE("environment variable overrides the default tolerance") {
  const std::string mid =
      write_temp(spec_to_json(fixtures::p3_mid()), "netcons_env.json");
  setenv("NETCONS_TOL", "1e-10", 1);
  CHECK(run_cli({"analyze", mid}).code == 3);
  setenv("NETCONS_TOL", "banana", 1);
  CHECK(run_cli({"analyze", mid}).code == 2);
  unsetenv("NETCONS_TOL");
}

TEST_CASE("reduced network re-ingests to the same spectrum") {
  testsupport::SpecSampler sampler(73);
  int checked = 0;
  for (int trial = 0; trial < 40 && checked < 8; ++trial) {
    auto spec = sampler.sample(6, 10, false);  // scalar networks
    auto sys = assemble(spec);
    if (sys.n_undamped < 2) continue;
    auto red = kron_reduce(sys);
    const std::string text = io::reduce_json(sys, red, 1e-9);

    // Re-ingest: undamped nodes with their original masses, dampers
    // removed, edges from the printed reduced list.
    const auto parsed = nlohmann::json::parse(text);
    NetworkSpec<double> reduced_spec;
    reduced_spec.dimension = red.r;
    std::map<std::string, Index> index_of;
    for (const auto& id : parsed["nodes"]) {
      NodeSpec<double> node;
      node.id = id.get<std::string>();
      const Index internal =
          sys.n_damped +
          static_cast<Index>(std::find(red.undamped_ids.begin(),
                                       red.undamped_ids.end(), node.id) -
                             red.undamped_ids.begin());
      node.mass = sys.M.block(internal * sys.r, internal * sys.r, sys.r, sys.r);
      node.damping = Eigen::MatrixXd::Zero(red.r, red.r);
      node.external_input = Eigen::VectorXd::Zero(red.r);
      index_of.emplace(node.id, reduced_spec.node_count());
      reduced_spec.nodes.push_back(std::move(node));
    }
    for (const auto& e : parsed["edges"]) {
      EdgeSpec<double> edge;
      edge.from = index_of.at(e["from"].get<std::string>());
      edge.to = index_of.at(e["to"].get<std::string>());
      edge.weight = Eigen::MatrixXd(1, 1);
      edge.weight(0, 0) = e["weight"][0][0].get<double>();
      CHECK(edge.weight(0, 0) > 0.0);  // scalar reduced weights stay positive
      reduced_spec.edges.push_back(std::move(edge));
    }
    if (reduced_spec.edge_count() == 0) continue;

    // Kron reduction preserves connectivity, so the incidence build holds.
    const Eigen::MatrixXd b = incidence_matrix(reduced_spec);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(reduced_spec.edge_count(),
                                              reduced_spec.edge_count());
    for (Index k = 0; k < reduced_spec.edge_count(); ++k)
      w(k, k) = reduced_spec.edges[static_cast<std::size_t>(k)].weight(0, 0);
    const Eigen::MatrixXd l_again = b * w * b.transpose();

    const auto spectrum = [&](const Eigen::MatrixXd& l) {
      std::vector<double> values;
      for (const auto& pair : generalized_eigs(l, red.M_u, 1e-9))
        for (Index c = 0; c < pair.eigenvectors.dim(); ++c)
          values.push_back(pair.eigenvalue);
      std::sort(values.begin(), values.end());
      return values;
    };
    const auto before = spectrum(red.L_tilde_u);
    const auto after = spectrum(l_again);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i)
      CHECK(std::abs(before[i] - after[i]) < 1e-10);
    ++checked;
  }
  CHECK(checked >= 5);
}
