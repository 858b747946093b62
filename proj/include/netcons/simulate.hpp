#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "netcons/system.hpp"
#include "netcons/types.hpp"

namespace netcons {

/// Integration settings. Zero-valued dt / t_end / convergence_window are
/// resolved to defaults (stability-audited step, damping-based horizon,
/// final 20% of the horizon).
template <typename Scalar>
struct SimConfig {
  Scalar dt = Scalar(0);
  Scalar t_end = Scalar(0);
  Scalar convergence_window = Scalar(0);
  Scalar convergence_tol = Scalar(1e-6);
  std::uint64_t seed = 0;
  Index sample_stride = 1;
};

enum class TrajectoryClass { Consensus, Oscillatory, Undecided };

template <typename Scalar>
struct Classification {
  TrajectoryClass kind = TrajectoryClass::Undecided;
  Vector<Scalar> beta_hat;        // agreement value when kind == Consensus
  Scalar residual_norm = Scalar(0);  // persistent energy norm when Oscillatory
};

/// Sampled trajectory of the closed loop together with the per-step Lyapunov
/// record. Raw states are stored; shifted states (equilibrium and cycle
/// offset removed) are states minus shift_offset.
template <typename Scalar>
struct Trajectory {
  Vector<Scalar> times;
  Matrix<Scalar> states;     // state_dim x samples, internal coordinates
  Matrix<Scalar> outputs;    // rn x samples, internal node order
  Matrix<Scalar> positions;  // rn x samples, internal node order
  Vector<Scalar> lyapunov;   // at samples

  Vector<Scalar> lyapunov_fine;     // per integration step, size steps+1
  Vector<Scalar> dissipation_fine;  // analytic dU/dt per step, size steps+1

  Scalar dt = Scalar(0);
  Scalar t_end = Scalar(0);
  Scalar window = Scalar(0);
  Vector<Scalar> shift_offset;
  Classification<Scalar> classification;

  Scalar initial_lyapunov = Scalar(0);
  Scalar max_step_increase = Scalar(0);   // max of U_{k+1} - U_k over steps
  Scalar initial_shifted_norm = Scalar(0);
  Scalar max_shifted_norm = Scalar(0);    // max ||z - offset||_2 over steps

  Index sample_count() const { return times.size(); }
  Matrix<Scalar> shifted_states() const {
    return states.colwise() - shift_offset;
  }
};

namespace detail {

// Square roots of the energy metric diag(M^{-1}, W), exploiting the block
// diagonal structure. forward = metric^{1/2}, backward = metric^{-1/2}.
template <typename Scalar>
struct MetricRoots {
  Matrix<Scalar> forward;
  Matrix<Scalar> backward;
};

template <typename Scalar>
MetricRoots<Scalar> metric_roots(const SystemMatrices<Scalar>& sys) {
  const Index r = sys.r;
  const Index rn = r * sys.n, rm = r * sys.m;
  MetricRoots<Scalar> roots;
  roots.forward = Matrix<Scalar>::Zero(rn + rm, rn + rm);
  roots.backward = Matrix<Scalar>::Zero(rn + rm, rn + rm);
  for (Index i = 0; i < sys.n; ++i) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(
        sys.M.block(i * r, i * r, r, r));
    roots.forward.block(i * r, i * r, r, r) = es.operatorInverseSqrt();
    roots.backward.block(i * r, i * r, r, r) = es.operatorSqrt();
  }
  for (Index k = 0; k < sys.m; ++k) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(
        sys.W.block(k * r, k * r, r, r));
    roots.forward.block(rn + k * r, rn + k * r, r, r) = es.operatorSqrt();
    roots.backward.block(rn + k * r, rn + k * r, r, r) =
        es.operatorInverseSqrt();
  }
  return roots;
}

// Degree-4 Taylor polynomial of exp(dt A): the exact one-step map of the
// classical Runge-Kutta scheme on a linear system.
template <typename Scalar>
Matrix<Scalar> rk4_step_matrix(const Matrix<Scalar>& a, Scalar dt) {
  const Index d = a.rows();
  const Matrix<Scalar> x = dt * a;
  Matrix<Scalar> term = Matrix<Scalar>::Identity(d, d);
  Matrix<Scalar> phi = term;
  for (int k = 1; k <= 4; ++k) {
    term = (term * x) / Scalar(k);
    phi += term;
  }
  return phi;
}

// dt * (I + X/2 + X^2/6 + X^3/24): maps the constant forcing G v to the
// exact RK4 increment per step.
template <typename Scalar>
Matrix<Scalar> rk4_input_matrix(const Matrix<Scalar>& a, Scalar dt) {
  const Index d = a.rows();
  const Matrix<Scalar> x = dt * a;
  Matrix<Scalar> term = Matrix<Scalar>::Identity(d, d);
  Matrix<Scalar> psi = term;
  for (int k = 2; k <= 4; ++k) {
    term = (term * x) / Scalar(k);
    psi += term;
  }
  return dt * psi;
}

template <typename Scalar>
Scalar spectral_top(const Matrix<Scalar>& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(sym,
                                                   Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline constexpr double kEnergyAuditSlack = 1e-10;

}  // namespace detail

/// Largest natural frequency squared: the top eigenvalue of M^{-1} L.
template <typename Scalar>
Scalar max_laplacian_eigenvalue(const SystemMatrices<Scalar>& sys) {
  const auto roots = detail::metric_roots(sys);
  const Index rn = sys.r * sys.n;
  const Matrix<Scalar> m_inv_sqrt = roots.forward.topLeftCorner(rn, rn);
  return detail::spectral_top(
      Matrix<Scalar>(m_inv_sqrt * sys.L_total * m_inv_sqrt));
}

/// Growth factor of the energy norm over one RK4 step, minus one. The exact
/// flow contracts the metric diag(M^{-1}, W); a step is admissible when the
/// discrete map does too, up to a small slack.
template <typename Scalar>
Scalar rk4_energy_growth(const SystemMatrices<Scalar>& sys, Scalar dt) {
  const auto roots = detail::metric_roots(sys);
  const Matrix<Scalar> phi = detail::rk4_step_matrix(sys.A_closed, dt);
  const Matrix<Scalar> phi_metric = roots.forward * phi * roots.backward;
  Eigen::JacobiSVD<Matrix<Scalar>> svd(phi_metric);
  const Scalar top = svd.singularValues()(0);
  return top * top - Scalar(1);
}

/// Step size that passes both the frequency bound and the energy audit:
/// start from min(0.1 / sqrt(max natural frequency squared), damping-limited
/// step) and halve until the one-step map is non-expansive in the energy
/// metric.
template <typename Scalar>
Scalar default_step(const SystemMatrices<Scalar>& sys) {
  const Scalar lambda_l = std::max<Scalar>(max_laplacian_eigenvalue(sys),
                                           Scalar(defaults::abs_floor));
  const auto roots = detail::metric_roots(sys);
  const Index rn = sys.r * sys.n;
  const Matrix<Scalar> m_inv_sqrt = roots.forward.topLeftCorner(rn, rn);
  const Scalar lambda_r =
      detail::spectral_top(Matrix<Scalar>(m_inv_sqrt * sys.R * m_inv_sqrt));

  Scalar dt = std::min<Scalar>(Scalar(0.1) / std::sqrt(lambda_l),
                               Scalar(0.5) / (Scalar(1) + lambda_r));
  for (int i = 0; i < 60; ++i) {
    if (rk4_energy_growth(sys, dt) <= Scalar(detail::kEnergyAuditSlack))
      return dt;
    dt /= Scalar(2);
  }
  return dt;
}

/// Horizon heuristic: 100 over the smallest positive eigenvalue of the
/// mass-normalized damping.
template <typename Scalar>
Scalar default_horizon(const SystemMatrices<Scalar>& sys) {
  const auto roots = detail::metric_roots(sys);
  const Index rn = sys.r * sys.n;
  const Matrix<Scalar> m_inv_sqrt = roots.forward.topLeftCorner(rn, rn);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(
      Matrix<Scalar>(m_inv_sqrt * sys.R * m_inv_sqrt), Eigen::EigenvaluesOnly);
  const Scalar top = std::max<Scalar>(es.eigenvalues().maxCoeff(), Scalar(1));
  Scalar min_positive = top;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) {
    const Scalar v = es.eigenvalues()(i);
    if (v > Scalar(defaults::rank_tol) * top)
      min_positive = std::min(min_positive, v);
  }
  return std::clamp<Scalar>(Scalar(100) / min_positive, Scalar(10),
                            Scalar(1e4));
}

/// Horizon scaled by the slowest strictly decaying mode of the closed loop,
/// long enough for a state of the given shifted norm to settle below tol.
template <typename Scalar>
Scalar suggest_horizon(const SystemMatrices<Scalar>& sys, Scalar shifted_norm,
                       Scalar tol) {
  Eigen::EigenSolver<Matrix<Scalar>> es(sys.A_closed, false);
  const auto& values = es.eigenvalues();
  Scalar scale = Scalar(0);
  for (Index i = 0; i < values.size(); ++i)
    scale = std::max(scale, std::abs(values(i)));
  const Scalar cutoff = Scalar(1e-9) * std::max<Scalar>(scale, Scalar(1));
  Scalar slowest = Scalar(0);
  for (Index i = 0; i < values.size(); ++i) {
    const Scalar re = values(i).real();
    if (re < -cutoff && (slowest == Scalar(0) || re > -slowest))
      slowest = -re;
  }
  if (slowest == Scalar(0)) return default_horizon(sys);
  const Scalar span =
      std::log((Scalar(1) + shifted_norm) / tol) + Scalar(7);
  return std::clamp<Scalar>(span / slowest, Scalar(20), Scalar(1e7));
}

/// Deterministic standard-normal state in internal coordinates. The draw is
/// defined in the user's node/edge order so it does not depend on the
/// internal permutation.
template <typename Scalar>
Vector<Scalar> random_state(const SystemMatrices<Scalar>& sys,
                            std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const auto uniform = [&gen]() {
    return (static_cast<double>(gen() >> 11) + 0.5) * 0x1p-53;
  };
  const auto gauss = [&]() {
    const double u1 = uniform();
    const double u2 = uniform();
    return Scalar(std::sqrt(-2.0 * std::log(u1)) *
                  std::cos(2.0 * 3.14159265358979323846 * u2));
  };
  Vector<Scalar> p_user(sys.r * sys.n), q_user(sys.r * sys.m);
  for (Index i = 0; i < p_user.size(); ++i) p_user(i) = gauss();
  for (Index i = 0; i < q_user.size(); ++i) q_user(i) = gauss();
  return sys.state_to_internal(p_user, q_user);
}

namespace detail {

template <typename Scalar>
Classification<Scalar> classify(const SystemMatrices<Scalar>& sys,
                                const Equilibrium<Scalar>& eq,
                                const Trajectory<Scalar>& traj,
                                Scalar tol_conv) {
  const Index r = sys.r;
  const Scalar window_start = traj.t_end - traj.window;

  Index first = 0;
  while (first < traj.times.size() - 1 &&
         traj.times(first) < window_start - Scalar(1e-12))
    ++first;
  const Index count = traj.times.size() - first;

  Scalar dev_max = Scalar(0);
  Vector<Scalar> beta_hat = Vector<Scalar>::Zero(r);
  for (Index s = first; s < traj.times.size(); ++s) {
    Vector<Scalar> node_mean = Vector<Scalar>::Zero(r);
    for (Index i = 0; i < sys.n; ++i) {
      const auto y_i = traj.outputs.col(s).segment(i * r, r);
      dev_max = std::max<Scalar>(
          dev_max, (y_i - eq.beta).template lpNorm<Eigen::Infinity>());
      node_mean += y_i;
    }
    beta_hat += node_mean / Scalar(sys.n);
  }
  beta_hat /= Scalar(count);

  Classification<Scalar> result;
  if (dev_max < tol_conv) {
    result.kind = TrajectoryClass::Consensus;
    result.beta_hat = beta_hat;
    return result;
  }

  Scalar u_min = traj.lyapunov(first), u_sum = Scalar(0);
  for (Index s = first; s < traj.times.size(); ++s) {
    u_min = std::min(u_min, traj.lyapunov(s));
    u_sum += traj.lyapunov(s);
  }
  const Scalar u_first = traj.lyapunov(first);
  const Scalar u_last = traj.lyapunov(traj.times.size() - 1);
  const Scalar plateau_ratio =
      u_last / std::max<Scalar>(u_first, Scalar(defaults::abs_floor));

  Scalar max_std = Scalar(0);
  for (Index c = 0; c < traj.outputs.rows(); ++c) {
    const auto channel = traj.outputs.row(c).segment(first, count);
    const Scalar mean = channel.mean();
    const Scalar var = (channel.array() - mean).square().sum() /
                       Scalar(std::max<Index>(count - 1, 1));
    max_std = std::max<Scalar>(max_std, std::sqrt(var));
  }

  if (u_min > tol_conv * tol_conv && plateau_ratio >= Scalar(0.98) &&
      max_std > Scalar(10) * tol_conv) {
    result.kind = TrajectoryClass::Oscillatory;
    result.residual_norm = std::sqrt(Scalar(2) * u_sum / Scalar(count));
    result.beta_hat = beta_hat;
    return result;
  }
  result.kind = TrajectoryClass::Undecided;
  result.beta_hat = beta_hat;
  return result;
}

}  // namespace detail

/// Classical fixed-step RK4 on the closed loop dz/dt = A z + G v. The step
/// must respect both the frequency bound dt <= 0.1 / sqrt(lambda_max(M^{-1}L))
/// and a non-expansiveness audit of the one-step map in the energy metric;
/// either failure raises StepTooLarge. Outputs, reconstructed positions and
/// the Lyapunov record are filled along the way and the trajectory is
/// classified over the final window.
template <typename Scalar>
Trajectory<Scalar> integrate(const SystemMatrices<Scalar>& sys,
                             const Equilibrium<Scalar>& eq,
                             const Vector<Scalar>& z0,
                             const SimConfig<Scalar>& cfg) {
  const Index r = sys.r;
  const Index rn = r * sys.n, rm = r * sys.m;
  const Index dim = rn + rm;
  if (z0.size() != dim) throw DimensionMismatch("initial state has wrong length");

  SimConfig<Scalar> c = cfg;
  if (c.dt <= Scalar(0)) c.dt = default_step(sys);
  if (c.t_end <= Scalar(0)) c.t_end = default_horizon(sys);
  if (c.convergence_window <= Scalar(0))
    c.convergence_window = Scalar(0.2) * c.t_end;
  c.convergence_window = std::min(c.convergence_window, c.t_end);
  if (c.sample_stride < 1) c.sample_stride = 1;
  if (!(c.t_end >= c.convergence_window && c.convergence_window > Scalar(0)))
    throw Error("invalid simulation window");

  const Scalar lambda_l = max_laplacian_eigenvalue(sys);
  if (c.dt > Scalar(0.1) / std::sqrt(std::max<Scalar>(
                 lambda_l, Scalar(defaults::abs_floor))))
    throw StepTooLarge("dt exceeds 0.1 over the largest natural frequency");
  if (rk4_energy_growth(sys, c.dt) > Scalar(detail::kEnergyAuditSlack))
    throw StepTooLarge("one-step map expands the energy norm; decrease dt");

  const Index steps = std::max<Index>(
      1, static_cast<Index>(std::ceil(c.t_end / c.dt - Scalar(1e-9))));

  const Matrix<Scalar> phi = detail::rk4_step_matrix(sys.A_closed, c.dt);
  const Vector<Scalar> forcing = sys.G * sys.input;
  const Vector<Scalar> psi = detail::rk4_input_matrix(sys.A_closed, c.dt) * forcing;

  Eigen::LLT<Matrix<Scalar>> m_llt(sys.M);
  const Matrix<Scalar> m_inv = m_llt.solve(Matrix<Scalar>::Identity(rn, rn));
  const Matrix<Scalar> damp_form = m_inv * sys.R * m_inv;

  // Constant offset whose removal turns the flow into the shifted
  // homogeneous system: equilibrium plus the cycle component of q(0).
  const auto dec = decompose_controller_state(sys, Vector<Scalar>(z0.tail(rm)));
  Vector<Scalar> offset(dim);
  offset.head(rn) = eq.p_bar;
  offset.tail(rm) = eq.q_bar + (z0.tail(rm) - dec.graph_part);

  const auto lyapunov_of = [&](const Vector<Scalar>& shifted) {
    const auto p = shifted.head(rn);
    const auto q = shifted.tail(rm);
    return Scalar(0.5) * p.dot(m_inv * p) + Scalar(0.5) * q.dot(sys.W * q);
  };
  const auto dissipation_of = [&](const Vector<Scalar>& shifted) {
    const auto p = shifted.head(rn);
    return -p.dot(damp_form * p);
  };

  std::vector<Index> sample_steps;
  for (Index k = 0; k <= steps; k += c.sample_stride) sample_steps.push_back(k);
  if (sample_steps.back() != steps) sample_steps.push_back(steps);
  const Index samples = static_cast<Index>(sample_steps.size());

  Trajectory<Scalar> traj;
  traj.dt = c.dt;
  traj.t_end = Scalar(steps) * c.dt;
  traj.window = c.convergence_window;
  traj.shift_offset = offset;
  traj.times.resize(samples);
  traj.states.resize(dim, samples);
  traj.outputs.resize(rn, samples);
  traj.lyapunov.resize(samples);
  traj.lyapunov_fine.resize(steps + 1);
  traj.dissipation_fine.resize(steps + 1);

  Vector<Scalar> z = z0;
  Vector<Scalar> shifted = z - offset;
  Scalar u_prev = lyapunov_of(shifted);
  traj.initial_lyapunov = u_prev;
  traj.initial_shifted_norm = shifted.norm();
  traj.max_shifted_norm = traj.initial_shifted_norm;
  traj.max_step_increase = Scalar(0);
  traj.lyapunov_fine(0) = u_prev;
  traj.dissipation_fine(0) = dissipation_of(shifted);

  Index next_sample = 0;
  const auto record = [&](Index k) {
    if (next_sample < samples && sample_steps[static_cast<std::size_t>(next_sample)] == k) {
      traj.times(next_sample) = Scalar(k) * c.dt;
      traj.states.col(next_sample) = z;
      traj.outputs.col(next_sample) = m_inv * z.head(rn);
      traj.lyapunov(next_sample) = traj.lyapunov_fine(k);
      ++next_sample;
    }
  };
  record(0);

  for (Index k = 1; k <= steps; ++k) {
    z = phi * z + psi;
    shifted = z - offset;
    const Scalar u = lyapunov_of(shifted);
    traj.lyapunov_fine(k) = u;
    traj.dissipation_fine(k) = dissipation_of(shifted);
    traj.max_step_increase = std::max(traj.max_step_increase, u - u_prev);
    traj.max_shifted_norm = std::max(traj.max_shifted_norm, shifted.norm());
    u_prev = u;
    record(k);
  }

  // Positions by trapezoidal integration of the output, anchored at the
  // potentials that reproduce q(0).
  traj.positions.resize(rn, samples);
  traj.positions.col(0) = dec.s0;
  for (Index s = 1; s < samples; ++s) {
    const Scalar h = traj.times(s) - traj.times(s - 1);
    traj.positions.col(s) =
        traj.positions.col(s - 1) +
        Scalar(0.5) * h * (traj.outputs.col(s - 1) + traj.outputs.col(s));
  }

  traj.classification = detail::classify(sys, eq, traj, c.convergence_tol);
  return traj;
}

/// Sup over the final window of the Euclidean distance from the shifted
/// state to the given subspace. An empty basis measures the distance to the
/// origin.
template <typename Scalar>
Scalar project_onto_lasalle(const Trajectory<Scalar>& traj,
                            const SubspaceBasis<Scalar>& basis) {
  if (basis.ambient_dim != traj.states.rows())
    throw AmbientMismatch("subspace does not match the state dimension");
  const Scalar window_start = traj.t_end - traj.window;
  Scalar sup = Scalar(0);
  for (Index s = 0; s < traj.sample_count(); ++s) {
    if (traj.times(s) < window_start - Scalar(1e-12)) continue;
    const Vector<Scalar> shifted = traj.states.col(s) - traj.shift_offset;
    const Vector<Scalar> residual =
        basis.trivial()
            ? shifted
            : Vector<Scalar>(shifted -
                             basis.basis * (basis.basis.transpose() * shifted));
    sup = std::max<Scalar>(sup, residual.norm());
  }
  return sup;
}

/// Integrates from z0 and from z0 with the controller state moved along the
/// W^{-1}-scaled cycle space, and returns the largest drift of the
/// trajectory difference from its initial value. The difference is constant
/// for the exact flow, so the result is pure integration noise.
template <typename Scalar>
Scalar shift_invariance_check(const SystemMatrices<Scalar>& sys,
                              const Equilibrium<Scalar>& eq,
                              const Vector<Scalar>& z0,
                              const Vector<Scalar>& gamma,
                              const SimConfig<Scalar>& cfg) {
  const Index rn = sys.r * sys.n, rm = sys.r * sys.m;
  if (gamma.size() != sys.C_lift.cols())
    throw DimensionMismatch("cycle coordinate has wrong length");
  if (gamma.size() == 0) return Scalar(0);

  Eigen::LLT<Matrix<Scalar>> w_llt(sys.W);
  Vector<Scalar> z0_shifted = z0;
  z0_shifted.tail(rm) += w_llt.solve(sys.C_lift * gamma);

  const Trajectory<Scalar> a = integrate(sys, eq, z0, cfg);
  const Trajectory<Scalar> b = integrate(sys, eq, z0_shifted, cfg);
  const Vector<Scalar> base = b.states.col(0) - a.states.col(0);
  Scalar dev = Scalar(0);
  for (Index s = 0; s < a.sample_count(); ++s)
    dev = std::max<Scalar>(
        dev, (b.states.col(s) - a.states.col(s) - base).norm());
  return dev;
}

}  // namespace netcons
