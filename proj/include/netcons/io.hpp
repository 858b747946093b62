#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <netcons/analysis.hpp>
#include <netcons/graph.hpp>
#include <netcons/simulate.hpp>
#include <netcons/system.hpp>

namespace netcons::io {

/// Parses the network JSON schema: {"dimension": r, "nodes": [{"id",
/// "mass", "damping", "external_input"}], "edges": [{"from", "to",
/// "weight"}]}. Matrices are r x r nested arrays even for r = 1. Throws
/// ValidationError with a message naming the offending field; the returned
/// spec has not been validated semantically yet.
NetworkSpec<double> parse_network(const std::string& json_text);

/// parse_network on the contents of a file.
NetworkSpec<double> load_network(const std::string& path);

/// Initial state JSON {"p": [rn numbers], "q": [rm numbers]} in the user's
/// node/edge order, converted to internal coordinates.
Vector<double> parse_initial_state(const std::string& json_text,
                                   const SystemMatrices<double>& sys);

/// Locale-independent decimal form with 17 significant digits.
std::string format_number(double v);

std::string report_json(const ConsensusReport<double>& report);
std::string modes_json(const std::vector<OscillationMode<double>>& modes);
std::string reduce_json(const SystemMatrices<double>& sys,
                        const ReducedSystem<double>& red, double tol);
std::string classification_json(const Trajectory<double>& traj);

/// Trace with header t,y_1,...,y_{rn},U; outputs are reported in the user's
/// node order.
void write_csv(std::ostream& out, const SystemMatrices<double>& sys,
               const Trajectory<double>& traj);

}  // namespace netcons::io
