#pragma once

// Projection of a controller onto the affine-in-q family
//   nu(t, q) = h1(t) / (2 kappa) + (alpha + h2(t)) / (2 kappa) q
// by one OLS regression of nu on q per time step.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "execlab/dynamics.hpp"
#include "execlab/params.hpp"

namespace execlab {

struct HarvestOptions {
  int n_paths = 2000;
  double q0_min = -1.0;
  double q0_max = -0.1;
  double s0 = 10.0;
  std::uint64_t seed = 1;
  int threads = 1;
  /// A step is degenerate when sd(q_t) <= ratio * sd(q_0) (or sd(q_0) = 0).
  double degenerate_ratio = 1e-6;
  int min_samples = 30;
};

/// (q, nu) pairs per step from eval-mode rollouts of one controller.
struct ControlSamples {
  int n_steps = 0;
  Preferences prefs;
  std::vector<double> q0;                  ///< per path
  std::vector<std::vector<double>> q;      ///< [step][path]
  std::vector<std::vector<double>> nu;     ///< [step][path]
  std::vector<bool> degenerate;            ///< per step
};

ControlSamples harvest(const ControlFn& controller, const MarketParams& mp, const Preferences& pref,
                       const HarvestOptions& opts = {});

/// E[nu_t | sign(-Q0) nu_t > 0] per step; NaN where no sample qualifies.
std::vector<double> mean_conditional_control(const ControlSamples& samples);

struct StepProjection {
  int step = 0;
  double t = 0.0;
  std::size_t n = 0;
  bool defined = false;  ///< false when the step is degenerate
  double beta1 = 0.0;
  double beta2 = 0.0;
  double h1_tilde = 0.0;
  double h2_tilde = 0.0;
  std::optional<double> r2;  ///< undefined when all nu equal but residuals do not vanish
};

struct ProjectionResult {
  std::vector<StepProjection> steps;  ///< exactly n_steps entries
  /// Smallest R^2 over defined steps with a defined R^2.
  double min_r2() const;
};

struct OlsFit {
  double intercept = 0.0;
  double slope = 0.0;
  double ssr = 0.0;
  double sst = 0.0;
  std::optional<double> r2;
};

/// Least squares y = intercept + slope x. Requires n >= 2 and var(x) > 0.
OlsFit ols_with_intercept(const std::vector<double>& x, const std::vector<double>& y);

ProjectionResult project(const ControlSamples& samples, const MarketParams& mp);

/// Affine control implied by one step of a projection.
double projected_control(const StepProjection& p, const MarketParams& mp, double q);

struct ErrorMap {
  std::vector<int> steps;
  std::vector<std::vector<double>> q;                     ///< per row
  std::vector<std::vector<std::optional<double>>> error;  ///< |f - f~| / |f~|, empty where |f~| < eps_den
  /// Largest defined entry (0 when none).
  double max() const;
};

/// Relative error on a fixed (step, q) grid. Steps with no defined
/// projection produce rows of undefined cells.
ErrorMap relative_error_map(const ControlFn& controller, const ProjectionResult& proj, const MarketParams& mp,
                            const Preferences& pref, const std::vector<int>& steps, const std::vector<double>& q_grid,
                            double eps_den = 1e-8);

/// Relative error over the visited bulk: per defined step, n_q points evenly
/// spaced between the lo and hi quantiles of the harvested q.
ErrorMap bulk_error_map(const ControlFn& controller, const ProjectionResult& proj, const ControlSamples& samples,
                        const MarketParams& mp, int n_q = 21, double lo = 0.05, double hi = 0.95,
                        double eps_den = 1e-8);

/// Per-preference control factory for heatmaps.
using ControlFactory = std::function<ControlFn(const Preferences&)>;

/// Steps until `fraction` of |q0| is executed on the noise-free path, per
/// (A, phi) cell; rows follow a_grid, columns phi_grid. Cells whose closed
/// form blows up are left empty.
std::vector<std::vector<std::optional<int>>> exec_time_heatmap(const ControlFactory& source, const MarketParams& mp,
                                                               const std::vector<double>& a_grid,
                                                               const std::vector<double>& phi_grid, double q0 = -1.0,
                                                               double fraction = 0.9, double gamma = 2.0);

/// Closed-form source for exec_time_heatmap.
ControlFactory closed_form_source(const MarketParams& mp);

/// Same semantics as time_to_fraction for an arbitrary controller.
int steps_to_fraction(const ControlFn& controller, const MarketParams& mp, const Preferences& pref, double q0,
                      double fraction);

void write_projection_csv(const ProjectionResult& proj, const std::filesystem::path& path);
/// Long format: step,t,q,rel_error (blank when undefined).
void write_error_map_csv(const ErrorMap& map, const MarketParams& mp, const std::filesystem::path& path);
/// Matrix with a header row of phi values and a leading column of A values.
void write_heatmap_csv(const std::vector<std::vector<std::optional<int>>>& heat, const std::vector<double>& a_grid,
                       const std::vector<double>& phi_grid, const std::filesystem::path& path);

}  // namespace execlab
