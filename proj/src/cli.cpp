#include "netcons/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <future>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "netcons/analysis.hpp"
#include "netcons/io.hpp"
#include "netcons/simulate.hpp"

namespace netcons::cli {

namespace {

struct Loaded {
  NetworkSpec<double> spec;
  SystemMatrices<double> sys;
  Equilibrium<double> eq;
  ReducedSystem<double> red;
};

Loaded load(const std::string& path, double tol) {
  Loaded loaded{io::load_network(path), {}, {}, {}};
  validate(loaded.spec, tol);
  loaded.sys = assemble(loaded.spec, tol);
  loaded.eq = equilibrium(loaded.sys);
  loaded.red = kron_reduce(loaded.sys);
  return loaded;
}

double resolve_tolerance(const std::optional<double>& flag,
                         std::ostream& err, bool& ok) {
  if (flag) return *flag;
  if (const char* env = std::getenv("NETCONS_TOL")) {
    char* end = nullptr;
    const double value = std::strtod(env, &end);
    if (end == env || *end != '\0' || !(value > 0)) {
      err << "error: NETCONS_TOL is not a positive number\n";
      ok = false;
      return defaults::rank_tol;
    }
    return value;
  }
  return defaults::rank_tol;
}

std::string classification_name(TrajectoryClass kind) {
  switch (kind) {
    case TrajectoryClass::Consensus: return "consensus";
    case TrajectoryClass::Oscillatory: return "oscillatory";
    default: return "undecided";
  }
}

// One verification run: simulate from a seeded random state with a horizon
// scaled to the slowest mode, doubling once when the window is inconclusive.
struct VerifyRun {
  std::uint64_t seed = 0;
  TrajectoryClass kind = TrajectoryClass::Undecided;
  bool matches = false;
};

VerifyRun verify_run(const Loaded& loaded, bool consensus_expected,
                     std::uint64_t seed) {
  VerifyRun result;
  result.seed = seed;
  const Vector<double> z0 = random_state(loaded.sys, seed);
  const Vector<double> shifted = shift_to_origin(loaded.sys, loaded.eq, z0);
  SimConfig<double> cfg;
  cfg.t_end = suggest_horizon(loaded.sys, shifted.norm(), cfg.convergence_tol);
  auto traj = integrate(loaded.sys, loaded.eq, z0, cfg);
  if (traj.classification.kind == TrajectoryClass::Undecided) {
    cfg.t_end *= 2;
    traj = integrate(loaded.sys, loaded.eq, z0, cfg);
  }
  result.kind = traj.classification.kind;
  result.matches =
      consensus_expected
          ? result.kind == TrajectoryClass::Consensus
          : result.kind == TrajectoryClass::Oscillatory;
  return result;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Analysis and simulation of damped/undamped coupled networks"};
  app.require_subcommand(1);

  std::optional<double> tol_flag;
  std::string file;

  auto* analyze_cmd =
      app.add_subcommand("analyze", "print the consensus report");
  analyze_cmd->add_option("file", file, "network JSON")->required();
  analyze_cmd->add_option("--tol", tol_flag, "rank tolerance");

  auto* reduce_cmd = app.add_subcommand(
      "reduce", "print the Kron-reduced network over the undamped nodes");
  reduce_cmd->add_option("file", file, "network JSON")->required();
  reduce_cmd->add_option("--tol", tol_flag, "rank tolerance");

  auto* modes_cmd =
      app.add_subcommand("modes", "print the steady-state oscillation modes");
  modes_cmd->add_option("file", file, "network JSON")->required();
  modes_cmd->add_option("--tol", tol_flag, "rank tolerance");

  auto* simulate_cmd =
      app.add_subcommand("simulate", "integrate and classify a trajectory");
  double t_end = 0, dt = 0;
  std::uint64_t seed = 0;
  std::string init_file, trace_file;
  simulate_cmd->add_option("file", file, "network JSON")->required();
  simulate_cmd->add_option("--t-end", t_end, "horizon");
  simulate_cmd->add_option("--dt", dt, "step size");
  auto* init_opt =
      simulate_cmd->add_option("--init", init_file, "initial state JSON");
  simulate_cmd->add_option("--seed", seed, "random initial state seed")
      ->excludes(init_opt);
  simulate_cmd->add_option("--out", trace_file, "CSV trace path");
  simulate_cmd->add_option("--tol", tol_flag, "rank tolerance");

  auto* verify_cmd = app.add_subcommand(
      "verify", "cross-check all verdicts against simulations");
  int runs = 3;
  verify_cmd->add_option("file", file, "network JSON")->required();
  verify_cmd->add_option("--runs", runs, "number of simulations")
      ->check(CLI::PositiveNumber);
  verify_cmd->add_option("--tol", tol_flag, "rank tolerance");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream dummy;
    return app.exit(e, dummy, err);
  }

  bool tol_ok = true;
  const double tol = resolve_tolerance(tol_flag, err, tol_ok);
  if (!tol_ok) return 2;

  try {
    if (*analyze_cmd) {
      const Loaded loaded = load(file, tol);
      const auto report = analyze(loaded.sys, loaded.red, loaded.eq, tol);
      if (report.by_pinned_dynamics != report.consensus)
        err << "warning: pinned-dynamics cross-check disagrees with the "
               "main verdicts\n";
      out << io::report_json(report) << "\n";
      return report.consensus ? 0 : 3;
    }
    if (*reduce_cmd) {
      const Loaded loaded = load(file, tol);
      out << io::reduce_json(loaded.sys, loaded.red, tol) << "\n";
      return 0;
    }
    if (*modes_cmd) {
      const Loaded loaded = load(file, tol);
      out << io::modes_json(oscillation_modes(loaded.red, tol)) << "\n";
      return 0;
    }
    if (*simulate_cmd) {
      const Loaded loaded = load(file, tol);
      Vector<double> z0;
      if (!init_file.empty()) {
        std::ifstream in(init_file, std::ios::binary);
        if (!in) throw ValidationError("cannot open \"" + init_file + "\"");
        std::ostringstream buffer;
        buffer << in.rdbuf();
        z0 = io::parse_initial_state(buffer.str(), loaded.sys);
      } else {
        z0 = random_state(loaded.sys, seed);
      }
      SimConfig<double> cfg;
      cfg.dt = dt;
      cfg.t_end = t_end;
      cfg.seed = seed;
      const auto traj = integrate(loaded.sys, loaded.eq, z0, cfg);
      if (!trace_file.empty()) {
        std::ofstream trace(trace_file, std::ios::binary);
        if (!trace)
          throw ValidationError("cannot write \"" + trace_file + "\"");
        io::write_csv(trace, loaded.sys, traj);
      }
      out << io::classification_json(traj) << "\n";
      return 0;
    }
    if (*verify_cmd) {
      const Loaded loaded = load(file, tol);
      const auto report = analyze(loaded.sys, loaded.red, loaded.eq, tol);
      if (report.by_pinned_dynamics != report.consensus)
        err << "warning: pinned-dynamics cross-check disagrees with the "
               "main verdicts\n";

      std::vector<std::future<VerifyRun>> futures;
      futures.reserve(static_cast<std::size_t>(runs));
      for (int k = 0; k < runs; ++k)
        futures.push_back(std::async(std::launch::async, verify_run,
                                     std::cref(loaded), report.consensus,
                                     static_cast<std::uint64_t>(k) + 1));
      bool all_match = report.agreement;
      std::string runs_json = "[";
      for (int k = 0; k < runs; ++k) {
        const VerifyRun r = futures[static_cast<std::size_t>(k)].get();
        if (k) runs_json += ",";
        runs_json += "{\"seed\":" + std::to_string(r.seed) +
                     ",\"classification\":\"" + classification_name(r.kind) +
                     "\",\"matches\":" + (r.matches ? "true" : "false") + "}";
        all_match = all_match && r.matches;
      }
      runs_json += "]";
      out << "{\"consensus\":" << (report.consensus ? "true" : "false")
          << ",\"verdict_agreement\":" << (report.agreement ? "true" : "false")
          << ",\"runs\":" << runs_json
          << ",\"all_agree\":" << (all_match ? "true" : "false") << "}\n";
      return all_match ? 0 : 1;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace netcons::cli
