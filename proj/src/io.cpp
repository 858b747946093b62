#include "netcons/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace netcons::io {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) {
  throw ValidationError(message);
}

json parse_json(const std::string& text) {
  json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded()) fail("invalid JSON");
  return parsed;
}

double number_at(const json& value, const std::string& where) {
  if (!value.is_number()) fail(where + " must be a number");
  return value.get<double>();
}

Eigen::MatrixXd matrix_at(const json& value, Index r,
                          const std::string& where) {
  if (!value.is_array() || static_cast<Index>(value.size()) != r)
    fail(where + " must be a " + std::to_string(r) + "x" + std::to_string(r) +
         " array");
  Eigen::MatrixXd m(r, r);
  for (Index i = 0; i < r; ++i) {
    const json& row = value[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != r)
      fail(where + " must be a " + std::to_string(r) + "x" +
           std::to_string(r) + " array");
    for (Index j = 0; j < r; ++j)
      m(i, j) = number_at(row[static_cast<std::size_t>(j)], where);
  }
  return m;
}

Eigen::VectorXd vector_at(const json& value, Index r,
                          const std::string& where) {
  if (!value.is_array() || static_cast<Index>(value.size()) != r)
    fail(where + " must be an array of length " + std::to_string(r));
  Eigen::VectorXd v(r);
  for (Index i = 0; i < r; ++i)
    v(i) = number_at(value[static_cast<std::size_t>(i)], where);
  return v;
}

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string number_list(const Eigen::VectorXd& v) {
  std::string out = "[";
  for (Index i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_number(v(i));
  }
  return out + "]";
}

std::string matrix_list(const Eigen::MatrixXd& m) {
  std::string out = "[";
  for (Index i = 0; i < m.rows(); ++i) {
    if (i) out += ",";
    out += number_list(m.row(i).transpose());
  }
  return out + "]";
}

std::string id_list(const std::vector<std::string>& ids) {
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ",";
    out += "\"" + escape(ids[i]) + "\"";
  }
  return out + "]";
}

std::string mode_object(const OscillationMode<double>& mode) {
  std::string out = "{\"frequency\":" + format_number(mode.frequency);
  out += ",\"shape\":" + number_list(mode.shape_real);
  out += ",\"nodes\":" + id_list(mode.participating_nodes) + "}";
  return out;
}

}  // namespace

NetworkSpec<double> parse_network(const std::string& json_text) {
  const json root = parse_json(json_text);
  if (!root.is_object()) fail("top level must be an object");
  if (!root.contains("dimension")) fail("missing \"dimension\"");
  if (!root["dimension"].is_number_integer() ||
      root["dimension"].get<long long>() < 1)
    fail("\"dimension\" must be a positive integer");

  NetworkSpec<double> spec;
  spec.dimension = root["dimension"].get<Index>();
  const Index r = spec.dimension;

  if (!root.contains("nodes") || !root["nodes"].is_array())
    fail("\"nodes\" must be an array");
  if (!root.contains("edges") || !root["edges"].is_array())
    fail("\"edges\" must be an array");

  std::map<std::string, Index> index_of;
  for (const json& item : root["nodes"]) {
    if (!item.is_object()) fail("every node must be an object");
    if (!item.contains("id") || !item["id"].is_string())
      fail("every node needs a string \"id\"");
    NodeSpec<double> node;
    node.id = item["id"].get<std::string>();
    const std::string where = "node \"" + node.id + "\"";
    if (!item.contains("mass")) fail(where + " is missing \"mass\"");
    if (!item.contains("damping")) fail(where + " is missing \"damping\"");
    if (!item.contains("external_input"))
      fail(where + " is missing \"external_input\"");
    node.mass = matrix_at(item["mass"], r, where + " mass");
    node.damping = matrix_at(item["damping"], r, where + " damping");
    node.external_input =
        vector_at(item["external_input"], r, where + " external_input");
    index_of.emplace(node.id, spec.node_count());
    spec.nodes.push_back(std::move(node));
  }

  Index edge_number = 0;
  for (const json& item : root["edges"]) {
    if (!item.is_object()) fail("every edge must be an object");
    const std::string where = "edge " + std::to_string(edge_number);
    if (!item.contains("from") || !item["from"].is_string() ||
        !item.contains("to") || !item["to"].is_string())
      fail(where + " needs string \"from\" and \"to\"");
    EdgeSpec<double> edge;
    const std::string from = item["from"].get<std::string>();
    const std::string to = item["to"].get<std::string>();
    const auto from_it = index_of.find(from);
    const auto to_it = index_of.find(to);
    if (from_it == index_of.end())
      fail(where + " references unknown node id \"" + from + "\"");
    if (to_it == index_of.end())
      fail(where + " references unknown node id \"" + to + "\"");
    edge.from = from_it->second;
    edge.to = to_it->second;
    if (!item.contains("weight")) fail(where + " is missing \"weight\"");
    edge.weight = matrix_at(item["weight"], r, where + " weight");
    spec.edges.push_back(std::move(edge));
    ++edge_number;
  }
  return spec;
}

NetworkSpec<double> load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open \"" + path + "\"");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_network(buffer.str());
}

Vector<double> parse_initial_state(const std::string& json_text,
                                   const SystemMatrices<double>& sys) {
  const json root = parse_json(json_text);
  if (!root.is_object() || !root.contains("p") || !root.contains("q"))
    fail("initial state must be an object with \"p\" and \"q\"");
  const Eigen::VectorXd p =
      vector_at(root["p"], sys.r * sys.n, "initial state p");
  const Eigen::VectorXd q =
      vector_at(root["q"], sys.r * sys.m, "initial state q");
  return sys.state_to_internal(p, q);
}

std::string format_number(double v) {
  char buf[64];
  const auto result =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, result.ptr);
}

std::string report_json(const ConsensusReport<double>& report) {
  std::string out = "{";
  out += "\"consensus\":";
  out += report.consensus ? "true" : "false";
  out += ",\"beta\":" + number_list(report.beta);
  out += ",\"verdicts\":{";
  const auto flag = [](bool b) { return b ? "true" : "false"; };
  out += std::string("\"observability\":") + flag(report.by_observability);
  out += std::string(",\"reduced_eigenvectors\":") +
         flag(report.by_reduced_eigenvectors);
  out += std::string(",\"full_eigenvectors\":") +
         flag(report.by_full_eigenvectors);
  out += std::string(",\"reduced_eigenvectors_flipped\":") +
         flag(report.by_reduced_eigenvectors_flipped);
  out += std::string(",\"full_eigenvectors_flipped\":") +
         flag(report.by_full_eigenvectors_flipped);
  out += std::string(",\"pinned_dynamics\":") + flag(report.by_pinned_dynamics);
  out += std::string(",\"agreement\":") + flag(report.agreement);
  out += "}";
  out += ",\"oscillation_dim\":" + std::to_string(report.oscillation_dim);
  out += ",\"modes\":[";
  for (std::size_t i = 0; i < report.modes.size(); ++i) {
    if (i) out += ",";
    out += mode_object(report.modes[i]);
  }
  out += "]}";
  return out;
}

std::string modes_json(const std::vector<OscillationMode<double>>& modes) {
  std::string out = "[";
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (i) out += ",";
    out += mode_object(modes[i]);
  }
  return out + "]";
}

std::string reduce_json(const SystemMatrices<double>& sys,
                        const ReducedSystem<double>& red, double tol) {
  const Index r = red.r;
  std::string out = "{";
  out += "\"dimension\":" + std::to_string(r);
  out += ",\"nodes\":" + id_list(red.undamped_ids);
  out += ",\"laplacian\":" + matrix_list(red.L_tilde_u);
  out += ",\"edges\":[";
  const double scale = std::max(red.L_tilde_u.cwiseAbs().maxCoeff(),
                                defaults::abs_floor);
  bool first = true;
  for (Index i = 0; i < red.n_undamped; ++i) {
    for (Index j = i + 1; j < red.n_undamped; ++j) {
      const Eigen::MatrixXd block = red.L_tilde_u.block(i * r, j * r, r, r);
      if (block.cwiseAbs().maxCoeff() <= tol * scale) continue;
      if (!first) out += ",";
      first = false;
      out += "{\"from\":\"" +
             escape(red.undamped_ids[static_cast<std::size_t>(i)]) +
             "\",\"to\":\"" +
             escape(red.undamped_ids[static_cast<std::size_t>(j)]) +
             "\",\"weight\":" + matrix_list(-block) + "}";
    }
  }
  out += "]}";
  (void)sys;
  return out;
}

std::string classification_json(const Trajectory<double>& traj) {
  const auto& c = traj.classification;
  std::string kind;
  switch (c.kind) {
    case TrajectoryClass::Consensus: kind = "consensus"; break;
    case TrajectoryClass::Oscillatory: kind = "oscillatory"; break;
    case TrajectoryClass::Undecided: kind = "undecided"; break;
  }
  std::string out = "{\"classification\":\"" + kind + "\"";
  out += ",\"beta_hat\":" + number_list(c.beta_hat);
  out += ",\"residual_norm\":" + format_number(c.residual_norm);
  out += ",\"dt\":" + format_number(traj.dt);
  out += ",\"t_end\":" + format_number(traj.t_end);
  out += ",\"samples\":" + std::to_string(traj.sample_count());
  out += "}";
  return out;
}

void write_csv(std::ostream& out, const SystemMatrices<double>& sys,
               const Trajectory<double>& traj) {
  out << "t";
  for (Index i = 0; i < sys.r * sys.n; ++i) out << ",y_" << (i + 1);
  out << ",U\n";
  for (Index s = 0; s < traj.sample_count(); ++s) {
    out << format_number(traj.times(s));
    const Eigen::VectorXd y_user =
        sys.node_vector_to_original(traj.outputs.col(s));
    for (Index i = 0; i < y_user.size(); ++i)
      out << "," << format_number(y_user(i));
    out << "," << format_number(traj.lyapunov(s)) << "\n";
  }
}

}  // namespace netcons::io
