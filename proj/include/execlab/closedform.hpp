#pragma once

// Benchmark control for the quadratic (gamma = 2) problem. With the ansatz
// V(t, x, s, q) = x + q s + h0(t) + h1(t) q + h2(t) q^2 / 2 the optimal rate is
//   nu*(t, q) = h1(t) / (2 kappa) + (alpha + h2(t)) / (2 kappa) q
// where h2 solves the Riccati equation
//   h2' = (2 phi - alpha^2 / (2 kappa)) - (alpha / kappa) h2 - h2^2 / (2 kappa),
// h1' = -(alpha + h2) h1 / (2 kappa), h0' = -h1^2 / (4 kappa),
// with h0(T) = h1(T) = 0 and h2(T) = -2A. Integration runs backward from T.

#include <vector>

#include "execlab/dynamics.hpp"
#include "execlab/params.hpp"

namespace execlab {

struct ClosedFormSolution {
  std::vector<double> t_grid;  // n_steps + 1 bin boundaries
  std::vector<double> h0;
  std::vector<double> h1;
  std::vector<double> h2;
  MarketParams market;
  Preferences prefs;

  double horizon() const { return t_grid.back(); }
};

struct SolveOptions {
  int substeps = 10;  ///< RK4 sub-steps per bin
};

/// Running penalty per unit time implied by the per-bin penalty phi.
inline double running_penalty_rate(const MarketParams& mp, const Preferences& pref) { return pref.phi / mp.dt; }

ClosedFormSolution solve(const MarketParams& mp, const Preferences& pref, const SolveOptions& opts = {});

double control(const ClosedFormSolution& sol, double t, double q);

double value(const ClosedFormSolution& sol, double t, double x, double s, double q);

/// First bin k with |Q_k| <= (1 - fraction) |Q0| on the noise-free path under
/// the closed-form control; n_steps + 1 when never reached.
int time_to_fraction(const ClosedFormSolution& sol, const MarketParams& mp, double q0, double fraction);

/// Adapter usable by rollout(); queries at bin boundaries.
ControlFn as_controller(const ClosedFormSolution& sol);

}  // namespace execlab
