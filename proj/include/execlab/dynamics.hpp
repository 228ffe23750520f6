#pragma once

// Discrete-time closed-loop impact dynamics:
//   S' = S + alpha_t nu dt + sigma sqrt(dt) eps
//   Q' = Q + nu dt
//   X' = X - nu (S + kappa_t nu) dt
// and the execution reward
//   X_T + Q_T S_T - A |Q_T|^gamma - phi sum_{t=0..T} |Q_t|^gamma.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "execlab/autodiff.hpp"
#include "execlab/params.hpp"

namespace execlab {

struct State {
  int step = 0;
  double S = 0.0;
  double Q = 0.0;
  double X = 0.0;
};

/// What a controller sees at each decision: the bin index, the elapsed time,
/// the remaining inventory and the preferences being optimised.
struct ControlQuery {
  int step = 0;
  double t = 0.0;
  double q = 0.0;
  double A = 0.0;
  double phi = 0.0;
};

using ControlFn = std::function<double(const ControlQuery&)>;

struct Trajectory {
  int n_steps = 0;
  std::vector<double> eps;       // n_steps standard-normal draws
  std::vector<State> states;     // n_steps + 1
  std::vector<double> controls;  // n_steps
};

struct TrajectoryBatch {
  std::vector<Trajectory> paths;
};

/// Initial price and inventories; `q0` holds one value (broadcast) or one per path.
struct InitialConditions {
  double s0 = 10.0;
  std::vector<double> q0{-1.0};

  double q0_for(std::size_t path) const { return q0.size() == 1 ? q0[0] : q0.at(path); }
};

State step(const State& state, double nu, double eps, const MarketParams& mp, int bin_index);

double reward(const Trajectory& traj, const Preferences& pref);

/// Marked-to-market wealth sign(Q0) (Q0 S0 - X_T); zero when Q0 = 0.
double mtm(const Trajectory& traj);

/// One path driven by a fixed sequence of standard-normal draws.
Trajectory simulate_path(const ControlFn& controller, const MarketParams& mp, const Preferences& pref, double s0,
                         double q0, std::span<const double> eps);

/// One path driven by explicit per-bin price increments in place of
/// sigma sqrt(dt) eps; the trader's own impact is still added. The stored
/// eps are the increments divided by sigma sqrt(dt) (zero when sigma = 0).
Trajectory simulate_path_with_increments(const ControlFn& controller, const MarketParams& mp,
                                         const Preferences& pref, double s0, double q0,
                                         std::span<const double> increments);

/// Open-loop replay of a recorded control sequence.
Trajectory replay_controls(std::span<const double> controls, const MarketParams& mp, double s0, double q0,
                           std::span<const double> eps);

/// B paths, path i drawing its noise from substream (seed, i).
TrajectoryBatch rollout(const ControlFn& controller, const MarketParams& mp, const Preferences& pref,
                        std::size_t batch, std::uint64_t seed, const InitialConditions& init = {},
                        int threads = 1);

/// Standard-normal noise of `batch` paths exactly as rollout draws it.
std::vector<std::vector<double>> draw_noise(const MarketParams& mp, std::size_t batch, std::uint64_t seed);

// Templated update shared by the plain and taped code paths; both evaluate
// the same floating-point operations in the same order.
namespace detail {

template <class T>
struct PathVars {
  T S;
  T Q;
  T X;
};

template <class T>
inline void advance(PathVars<T>& p, const T& nu, double shock, double alpha_t, double kappa_t, double dt) {
  T cost = nu * (p.S + kappa_t * nu);
  T next_X = p.X - cost * dt;
  T next_S = p.S + (alpha_t * nu) * dt + shock;
  T next_Q = p.Q + nu * dt;
  p.S = next_S;
  p.Q = next_Q;
  p.X = next_X;
}

template <class T>
inline T terminal_reward(const PathVars<T>& p, const T& running_penalty, const Preferences& pref) {
  using ad::abs_pow;
  return p.X + p.Q * p.S - pref.A * abs_pow(p.Q, pref.gamma) - pref.phi * running_penalty;
}

}  // namespace detail

}  // namespace execlab
