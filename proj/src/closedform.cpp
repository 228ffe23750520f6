#include "execlab/closedform.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "execlab/errors.hpp"

namespace execlab {

namespace {

using Coeffs = std::array<double, 3>;  // h0, h1, h2

struct Rhs {
  double alpha;
  double kappa;
  double phi_rate;

  Coeffs operator()(const Coeffs& h) const {
    const double y = alpha + h[2];
    return {-h[1] * h[1] / (4.0 * kappa), -y * h[1] / (2.0 * kappa),
            (2.0 * phi_rate - alpha * alpha / (2.0 * kappa)) - (alpha / kappa) * h[2] - h[2] * h[2] / (2.0 * kappa)};
  }
};

Coeffs axpy(const Coeffs& y, double a, const Coeffs& k) { return {y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2]}; }

// One classical RK4 step of size -h (backward in time).
Coeffs rk4_backward(const Rhs& f, const Coeffs& y, double h) {
  const Coeffs k1 = f(y);
  const Coeffs k2 = f(axpy(y, -0.5 * h, k1));
  const Coeffs k3 = f(axpy(y, -0.5 * h, k2));
  const Coeffs k4 = f(axpy(y, -h, k3));
  Coeffs out;
  for (int i = 0; i < 3; ++i) out[i] = y[i] - h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

std::size_t bin_of(const ClosedFormSolution& sol, double t) {
  const int n = sol.market.n_steps;
  const auto k = static_cast<int>(std::floor(t / sol.market.dt));
  return static_cast<std::size_t>(std::clamp(k, 0, n - 1));
}

void check_time(const ClosedFormSolution& sol, double t) {
  if (!(t >= 0.0) || t > sol.horizon() * (1.0 + 1e-12)) {
    throw RangeError("closed form: time " + std::to_string(t) + " outside [0, " + std::to_string(sol.horizon()) +
                     "]");
  }
}

// Linear interpolation on the bin grid; exact at grid points.
double interp(const ClosedFormSolution& sol, const std::vector<double>& h, double t) {
  const double pos = t / sol.market.dt;
  const auto n = static_cast<double>(sol.market.n_steps);
  if (pos >= n) return h.back();
  const double k = std::floor(pos);
  const auto i = static_cast<std::size_t>(k);
  const double w = pos - k;
  if (w == 0.0) return h[i];
  return (1.0 - w) * h[i] + w * h[i + 1];
}

}  // namespace

ClosedFormSolution solve(const MarketParams& mp, const Preferences& pref, const SolveOptions& opts) {
  mp.validate();
  pref.validate();
  if (pref.gamma != 2.0) {
    throw UnsupportedError("closed form exists only for gamma = 2 (got " + std::to_string(pref.gamma) +
                           "); use a trained neural controller instead");
  }
  if (opts.substeps < 1) throw ConfigError("closed form: substeps must be >= 1");

  const auto n = static_cast<std::size_t>(mp.n_steps);
  ClosedFormSolution sol;
  sol.market = mp;
  sol.prefs = pref;
  sol.t_grid.resize(n + 1);
  sol.h0.resize(n + 1);
  sol.h1.resize(n + 1);
  sol.h2.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) sol.t_grid[k] = static_cast<double>(k) * mp.dt;

  const double phi_rate = running_penalty_rate(mp, pref);
  const double h = mp.dt / opts.substeps;
  Coeffs y{0.0, 0.0, -2.0 * pref.A};
  sol.h0[n] = y[0];
  sol.h1[n] = y[1];
  sol.h2[n] = y[2];
  // Anything this far beyond the scale of the problem is on its way to a pole.
  const double bound = 1e8 * (1.0 + 2.0 * pref.A + mp.alpha + std::sqrt(mp.kappa * phi_rate) + mp.alpha * mp.alpha / mp.kappa);

  for (std::size_t k = n; k-- > 0;) {
    const int bin = static_cast<int>(k);
    const Rhs f{mp.alpha_at(bin), mp.kappa_at(bin), phi_rate};
    for (int s = 0; s < opts.substeps; ++s) {
      y = rk4_backward(f, y, h);
      if (!std::isfinite(y[2]) || std::fabs(y[2]) > bound) {
        const double t_blow = sol.t_grid[k + 1] - (s + 1) * h;
        throw SingularityError("closed form: Riccati solution diverges near t = " + std::to_string(t_blow) +
                                   " (terminal condition beyond the unstable root)",
                               t_blow);
      }
    }
    sol.h0[k] = y[0];
    sol.h1[k] = y[1];
    sol.h2[k] = y[2];
  }
  return sol;
}

double control(const ClosedFormSolution& sol, double t, double q) {
  check_time(sol, t);
  const std::size_t bin = bin_of(sol, t);
  const double two_kappa = 2.0 * sol.market.kappa_at(static_cast<int>(bin));
  return interp(sol, sol.h1, t) / two_kappa + (sol.market.alpha_at(static_cast<int>(bin)) + interp(sol, sol.h2, t)) / two_kappa * q;
}

double value(const ClosedFormSolution& sol, double t, double x, double s, double q) {
  check_time(sol, t);
  return x + q * s + interp(sol, sol.h0, t) + interp(sol, sol.h1, t) * q + interp(sol, sol.h2, t) * q * q / 2.0;
}

int time_to_fraction(const ClosedFormSolution& sol, const MarketParams& mp, double q0, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0) throw ConfigError("time_to_fraction: fraction must be in (0, 1]");
  if (mp.n_steps != sol.market.n_steps) throw ConfigError("time_to_fraction: grid does not match market params");
  // Relative slack absorbs rounding when a path lands exactly on the target.
  const double target = (1.0 - fraction) * std::fabs(q0) + 1e-12 * std::fabs(q0);
  double q = q0;
  for (int k = 0; k <= mp.n_steps; ++k) {
    if (std::fabs(q) <= target) return k;
    if (k == mp.n_steps) break;
    const double two_kappa = 2.0 * mp.kappa_at(k);
    const double nu = sol.h1[static_cast<std::size_t>(k)] / two_kappa +
                      (mp.alpha_at(k) + sol.h2[static_cast<std::size_t>(k)]) / two_kappa * q;
    q = q + nu * mp.dt;
  }
  return mp.n_steps + 1;
}

ControlFn as_controller(const ClosedFormSolution& sol) {
  return [sol](const ControlQuery& query) {
    const auto k = static_cast<std::size_t>(query.step);
    const double two_kappa = 2.0 * sol.market.kappa_at(query.step);
    return sol.h1[k] / two_kappa + (sol.market.alpha_at(query.step) + sol.h2[k]) / two_kappa * query.q;
  };
}

}  // namespace execlab
