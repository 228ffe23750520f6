#include "execlab/dynamics.hpp"

#include <cmath>
#include <string>

#include "execlab/errors.hpp"
#include "execlab/parallel.hpp"
#include "execlab/rng.hpp"

namespace execlab {

namespace {

double noise_scale(const MarketParams& mp) { return mp.sigma * std::sqrt(mp.dt); }

void require_finite(double v, const char* what, int step) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite ") + what + " at step " + std::to_string(step));
  }
}

// Shared path loop; `shock_at(t)` yields the additive price noise of bin t.
template <class ShockFn>
Trajectory run_path(const ControlFn& controller, const MarketParams& mp, const Preferences& pref, double s0,
                    double q0, ShockFn&& shock_at, std::span<const double> eps) {
  const int n = mp.n_steps;
  Trajectory traj;
  traj.n_steps = n;
  traj.eps.assign(eps.begin(), eps.end());
  traj.states.reserve(static_cast<std::size_t>(n) + 1);
  traj.controls.reserve(static_cast<std::size_t>(n));

  detail::PathVars<double> p{s0, q0, 0.0};
  traj.states.push_back(State{0, p.S, p.Q, p.X});
  for (int t = 0; t < n; ++t) {
    const ControlQuery query{t, t * mp.dt, p.Q, pref.A, pref.phi};
    const double nu = controller(query);
    if (!std::isfinite(nu)) {
      throw NumericError("controller returned a non-finite trading rate at step " + std::to_string(t));
    }
    detail::advance(p, nu, shock_at(t), mp.alpha_at(t), mp.kappa_at(t), mp.dt);
    require_finite(p.S, "price", t + 1);
    require_finite(p.X, "wealth", t + 1);
    traj.controls.push_back(nu);
    traj.states.push_back(State{t + 1, p.S, p.Q, p.X});
  }
  return traj;
}

}  // namespace

State step(const State& state, double nu, double eps, const MarketParams& mp, int bin_index) {
  if (bin_index != state.step || bin_index < 0 || bin_index >= mp.n_steps) {
    throw HorizonError("step: bin index " + std::to_string(bin_index) + " invalid for state at step " +
                       std::to_string(state.step) + " with n_steps = " + std::to_string(mp.n_steps));
  }
  if (!std::isfinite(nu) || !std::isfinite(eps) || !std::isfinite(state.S) || !std::isfinite(state.Q) ||
      !std::isfinite(state.X)) {
    throw NumericError("step: non-finite input at step " + std::to_string(bin_index));
  }
  detail::PathVars<double> p{state.S, state.Q, state.X};
  detail::advance(p, nu, noise_scale(mp) * eps, mp.alpha_at(bin_index), mp.kappa_at(bin_index), mp.dt);
  require_finite(p.S, "price", bin_index + 1);
  require_finite(p.X, "wealth", bin_index + 1);
  return State{state.step + 1, p.S, p.Q, p.X};
}

double reward(const Trajectory& traj, const Preferences& pref) {
  const auto n = static_cast<std::size_t>(traj.n_steps);
  if (traj.n_steps < 1 || traj.states.size() != n + 1 || traj.controls.size() != n ||
      traj.states.back().step != traj.n_steps) {
    throw ConfigError("reward: trajectory is incomplete");
  }
  double running = 0.0;
  for (const State& s : traj.states) running = running + ad::abs_pow(s.Q, pref.gamma);
  const State& last = traj.states.back();
  return detail::terminal_reward(detail::PathVars<double>{last.S, last.Q, last.X}, running, pref);
}

double mtm(const Trajectory& traj) {
  if (traj.states.size() != static_cast<std::size_t>(traj.n_steps) + 1 || traj.n_steps < 1) {
    throw ConfigError("mtm: trajectory is incomplete");
  }
  const State& first = traj.states.front();
  const State& last = traj.states.back();
  const double sign = first.Q > 0.0 ? 1.0 : (first.Q < 0.0 ? -1.0 : 0.0);
  return sign * (first.Q * first.S - last.X);
}

Trajectory simulate_path(const ControlFn& controller, const MarketParams& mp, const Preferences& pref, double s0,
                         double q0, std::span<const double> eps) {
  if (eps.size() != static_cast<std::size_t>(mp.n_steps)) {
    throw ConfigError("simulate_path: noise length does not match n_steps");
  }
  const double scale = noise_scale(mp);
  return run_path(controller, mp, pref, s0, q0, [&](int t) { return scale * eps[static_cast<std::size_t>(t)]; },
                  eps);
}

Trajectory simulate_path_with_increments(const ControlFn& controller, const MarketParams& mp,
                                         const Preferences& pref, double s0, double q0,
                                         std::span<const double> increments) {
  if (increments.size() != static_cast<std::size_t>(mp.n_steps)) {
    throw ConfigError("simulate_path_with_increments: increment length does not match n_steps");
  }
  const double scale = noise_scale(mp);
  std::vector<double> eps(increments.size(), 0.0);
  if (scale > 0.0) {
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = increments[i] / scale;
  }
  return run_path(controller, mp, pref, s0, q0,
                  [&](int t) { return increments[static_cast<std::size_t>(t)]; }, eps);
}

Trajectory replay_controls(std::span<const double> controls, const MarketParams& mp, double s0, double q0,
                           std::span<const double> eps) {
  if (controls.size() != static_cast<std::size_t>(mp.n_steps)) {
    throw ConfigError("replay_controls: control sequence length does not match n_steps");
  }
  const ControlFn open_loop = [&](const ControlQuery& q) { return controls[static_cast<std::size_t>(q.step)]; };
  return simulate_path(open_loop, mp, Preferences{}, s0, q0, eps);
}

std::vector<std::vector<double>> draw_noise(const MarketParams& mp, std::size_t batch, std::uint64_t seed) {
  std::vector<std::vector<double>> noise(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    Rng rng = make_rng(seed, i);
    noise[i].resize(static_cast<std::size_t>(mp.n_steps));
    for (double& e : noise[i]) e = standard_normal(rng);
  }
  return noise;
}

TrajectoryBatch rollout(const ControlFn& controller, const MarketParams& mp, const Preferences& pref,
                        std::size_t batch, std::uint64_t seed, const InitialConditions& init, int threads) {
  if (batch < 1) throw ConfigError("rollout: batch size must be >= 1");
  if (init.q0.empty() || (init.q0.size() != 1 && init.q0.size() != batch)) {
    throw ConfigError("rollout: q0 must hold one value or one per path");
  }
  mp.validate();
  TrajectoryBatch out;
  out.paths.resize(batch);
  parallel_for(batch, threads, [&](std::size_t i) {
    Rng rng = make_rng(seed, i);
    std::vector<double> eps(static_cast<std::size_t>(mp.n_steps));
    for (double& e : eps) e = standard_normal(rng);
    try {
      out.paths[i] = simulate_path(controller, mp, pref, init.s0, init.q0_for(i), eps);
    } catch (const NumericError& e) {
      throw NumericError("path " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace execlab
