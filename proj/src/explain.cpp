#include "execlab/explain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "execlab/closedform.hpp"
#include "execlab/errors.hpp"
#include "execlab/io.hpp"
#include "execlab/parallel.hpp"
#include "execlab/rng.hpp"

namespace execlab {

namespace {

double stdev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Linear-interpolated sample quantile (type 7).
double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= v.size()) return v.back();
  const double w = pos - static_cast<double>(i);
  return (1.0 - w) * v[i] + w * v[i + 1];
}

std::optional<double> rel_error(double f, double f_tilde, double eps_den) {
  if (std::fabs(f_tilde) < eps_den) return std::nullopt;
  return std::fabs((f - f_tilde) / f_tilde);
}

}  // namespace

ControlSamples harvest(const ControlFn& controller, const MarketParams& mp, const Preferences& pref,
                       const HarvestOptions& opts) {
  mp.validate();
  if (opts.n_paths < opts.min_samples || opts.n_paths < 2) {
    throw ConfigError("harvest: n_paths must be at least " + std::to_string(std::max(2, opts.min_samples)));
  }
  if (!(opts.q0_min <= opts.q0_max)) throw ConfigError("harvest: q0 range is empty");
  const auto n_paths = static_cast<std::size_t>(opts.n_paths);
  const auto n = static_cast<std::size_t>(mp.n_steps);

  ControlSamples out;
  out.n_steps = mp.n_steps;
  out.prefs = pref;
  out.q0.resize(n_paths);
  Rng q_rng = make_rng(opts.seed, 0x71300000ULL);
  for (double& q : out.q0) q = opts.q0_min + (opts.q0_max - opts.q0_min) * uniform01(q_rng);

  std::vector<Trajectory> paths(n_paths);
  parallel_for(n_paths, opts.threads, [&](std::size_t i) {
    Rng rng = make_rng(opts.seed, i);
    std::vector<double> eps(n);
    for (double& e : eps) e = standard_normal(rng);
    paths[i] = simulate_path(controller, mp, pref, opts.s0, out.q0[i], eps);
  });

  out.q.assign(n, std::vector<double>(n_paths));
  out.nu.assign(n, std::vector<double>(n_paths));
  for (std::size_t i = 0; i < n_paths; ++i) {
    for (std::size_t t = 0; t < n; ++t) {
      out.q[t][i] = paths[i].states[t].Q;
      out.nu[t][i] = paths[i].controls[t];
    }
  }
  const double sd0 = stdev(out.q[0]);
  out.degenerate.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    out.degenerate[t] = sd0 == 0.0 || stdev(out.q[t]) <= opts.degenerate_ratio * sd0;
  }
  return out;
}

std::vector<double> mean_conditional_control(const ControlSamples& samples) {
  std::vector<double> out;
  for (std::size_t t = 0; t < samples.nu.size(); ++t) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < samples.nu[t].size(); ++i) {
      const double side = samples.q0[i] < 0.0 ? 1.0 : (samples.q0[i] > 0.0 ? -1.0 : 0.0);
      if (side * samples.nu[t][i] > 0.0) {
        sum += samples.nu[t][i];
        ++count;
      }
    }
    out.push_back(count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

OlsFit ols_with_intercept(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("ols: need at least two paired samples");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw ConfigError("ols: regressor has zero variance");
  OlsFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    fit.ssr += r * r;
  }
  fit.sst = syy;
  if (fit.sst > 0.0) {
    fit.r2 = std::clamp(1.0 - fit.ssr / fit.sst, 0.0, 1.0);
  } else if (fit.ssr == 0.0) {
    fit.r2 = 1.0;
  }
  return fit;
}

double ProjectionResult::min_r2() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& s : steps) {
    if (s.defined && s.r2) m = std::min(m, *s.r2);
  }
  return m;
}

ProjectionResult project(const ControlSamples& samples, const MarketParams& mp) {
  if (samples.n_steps != mp.n_steps || samples.q.size() != static_cast<std::size_t>(mp.n_steps)) {
    throw ConfigError("project: samples do not match n_steps");
  }
  ProjectionResult res;
  res.steps.resize(static_cast<std::size_t>(mp.n_steps));
  for (int t = 0; t < mp.n_steps; ++t) {
    const auto k = static_cast<std::size_t>(t);
    StepProjection& p = res.steps[k];
    p.step = t;
    p.t = t * mp.dt;
    p.n = samples.q[k].size();
    if (samples.degenerate[k] || p.n < 2 || stdev(samples.q[k]) == 0.0) continue;
    const OlsFit fit = ols_with_intercept(samples.q[k], samples.nu[k]);
    p.defined = true;
    p.beta1 = fit.intercept;
    p.beta2 = fit.slope;
    const double two_kappa = 2.0 * mp.kappa_at(t);
    p.h1_tilde = two_kappa * p.beta1;
    p.h2_tilde = two_kappa * p.beta2 - mp.alpha_at(t);
    p.r2 = fit.r2;
  }
  return res;
}

double projected_control(const StepProjection& p, const MarketParams& mp, double q) {
  const double two_kappa = 2.0 * mp.kappa_at(p.step);
  return p.h1_tilde / two_kappa + (mp.alpha_at(p.step) + p.h2_tilde) / two_kappa * q;
}

double ErrorMap::max() const {
  double m = 0.0;
  for (const auto& row : error) {
    for (const auto& e : row) {
      if (e) m = std::max(m, *e);
    }
  }
  return m;
}

ErrorMap relative_error_map(const ControlFn& controller, const ProjectionResult& proj, const MarketParams& mp,
                            const Preferences& pref, const std::vector<int>& steps, const std::vector<double>& q_grid,
                            double eps_den) {
  ErrorMap map;
  for (int t : steps) {
    if (t < 0 || t >= static_cast<int>(proj.steps.size())) throw RangeError("error map: step out of range");
    const StepProjection& p = proj.steps[static_cast<std::size_t>(t)];
    map.steps.push_back(t);
    map.q.push_back(q_grid);
    std::vector<std::optional<double>> row;
    for (double q : q_grid) {
      if (!p.defined) {
        row.emplace_back();
        continue;
      }
      const double f = controller(ControlQuery{t, t * mp.dt, q, pref.A, pref.phi});
      row.push_back(rel_error(f, projected_control(p, mp, q), eps_den));
    }
    map.error.push_back(std::move(row));
  }
  return map;
}

ErrorMap bulk_error_map(const ControlFn& controller, const ProjectionResult& proj, const ControlSamples& samples,
                        const MarketParams& mp, int n_q, double lo, double hi, double eps_den) {
  if (n_q < 2 || !(lo >= 0.0 && lo < hi && hi <= 1.0)) throw ConfigError("bulk error map: bad grid");
  ErrorMap map;
  for (const StepProjection& p : proj.steps) {
    if (!p.defined) continue;
    const auto& qs = samples.q[static_cast<std::size_t>(p.step)];
    const double q_lo = quantile(qs, lo);
    const double q_hi = quantile(qs, hi);
    std::vector<double> grid;
    std::vector<std::optional<double>> row;
    for (int i = 0; i < n_q; ++i) {
      const double q = q_lo + (q_hi - q_lo) * i / (n_q - 1);
      grid.push_back(q);
      const double f = controller(ControlQuery{p.step, p.t, q, samples.prefs.A, samples.prefs.phi});
      row.push_back(rel_error(f, projected_control(p, mp, q), eps_den));
    }
    map.steps.push_back(p.step);
    map.q.push_back(std::move(grid));
    map.error.push_back(std::move(row));
  }
  return map;
}

int steps_to_fraction(const ControlFn& controller, const MarketParams& mp, const Preferences& pref, double q0,
                      double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0) throw ConfigError("steps_to_fraction: fraction must be in (0, 1]");
  const std::vector<double> eps(static_cast<std::size_t>(mp.n_steps), 0.0);
  const Trajectory traj = simulate_path(controller, mp, pref, 10.0, q0, eps);
  const double target = (1.0 - fraction) * std::fabs(q0) + 1e-12 * std::fabs(q0);
  for (int k = 0; k <= mp.n_steps; ++k) {
    if (std::fabs(traj.states[static_cast<std::size_t>(k)].Q) <= target) return k;
  }
  return mp.n_steps + 1;
}

ControlFactory closed_form_source(const MarketParams& mp) {
  return [mp](const Preferences& pref) { return as_controller(solve(mp, pref)); };
}

std::vector<std::vector<std::optional<int>>> exec_time_heatmap(const ControlFactory& source, const MarketParams& mp,
                                                               const std::vector<double>& a_grid,
                                                               const std::vector<double>& phi_grid, double q0,
                                                               double fraction, double gamma) {
  for (double a : a_grid) {
    if (!(a > 0.0)) throw ConfigError("heatmap: A values must be > 0");
  }
  for (double p : phi_grid) {
    if (!(p > 0.0)) throw ConfigError("heatmap: phi values must be > 0");
  }
  std::vector<std::vector<std::optional<int>>> heat(a_grid.size(), std::vector<std::optional<int>>(phi_grid.size()));
  for (std::size_t i = 0; i < a_grid.size(); ++i) {
    for (std::size_t j = 0; j < phi_grid.size(); ++j) {
      const Preferences pref{a_grid[i], phi_grid[j], gamma};
      try {
        heat[i][j] = steps_to_fraction(source(pref), mp, pref, q0, fraction);
      } catch (const SingularityError&) {
        heat[i][j] = std::nullopt;
      }
    }
  }
  return heat;
}

void write_projection_csv(const ProjectionResult& proj, const std::filesystem::path& path) {
  std::string text = "t,beta1,beta2,h1_tilde,h2_tilde,r2,n\n";
  for (const auto& s : proj.steps) {
    if (!s.defined) {
      text += io::csv_row({io::fmt(s.t), "", "", "", "", "", std::to_string(s.n)});
      continue;
    }
    text += io::csv_row({io::fmt(s.t), io::fmt(s.beta1), io::fmt(s.beta2), io::fmt(s.h1_tilde), io::fmt(s.h2_tilde),
                         s.r2 ? io::fmt(*s.r2) : std::string(), std::to_string(s.n)});
  }
  io::write_text(path, text);
}

void write_error_map_csv(const ErrorMap& map, const MarketParams& mp, const std::filesystem::path& path) {
  std::string text = "step,t,q,rel_error\n";
  for (std::size_t r = 0; r < map.steps.size(); ++r) {
    for (std::size_t c = 0; c < map.q[r].size(); ++c) {
      const auto& e = map.error[r][c];
      text += io::csv_row({std::to_string(map.steps[r]), io::fmt(map.steps[r] * mp.dt), io::fmt(map.q[r][c]),
                           e ? io::fmt(*e) : std::string()});
    }
  }
  io::write_text(path, text);
}

void write_heatmap_csv(const std::vector<std::vector<std::optional<int>>>& heat, const std::vector<double>& a_grid,
                       const std::vector<double>& phi_grid, const std::filesystem::path& path) {
  std::vector<std::string> header{"A\\phi"};
  for (double p : phi_grid) header.push_back(io::fmt(p));
  std::string text = io::csv_row(header);
  for (std::size_t i = 0; i < a_grid.size(); ++i) {
    std::vector<std::string> row{io::fmt(a_grid[i])};
    for (const auto& c : heat[i]) row.push_back(c ? std::to_string(*c) : std::string());
    text += io::csv_row(row);
  }
  io::write_text(path, text);
}

}  // namespace execlab
