#pragma once

#include <optional>
#include <vector>

namespace execlab {

/// Per-bin multipliers (mean 1) for traded volume and bid-ask spread.
struct Seasonality {
  std::vector<double> volume_profile;
  std::vector<double> spread_profile;
};

/// Market environment of the discrete impact model.
struct MarketParams {
  double alpha = 0.01;  ///< permanent impact, price per (share per unit time) per unit time
  double kappa = 1.0;   ///< temporary impact, price per (share per unit time)
  double sigma = 0.1;   ///< volatility, price per sqrt(time)
  double dt = 1.0;      ///< bin length
  int n_steps = 77;     ///< decision bins per day
  std::optional<Seasonality> seasonality;

  double horizon() const { return dt * n_steps; }

  /// alpha_t, kappa_t after seasonal modulation by spread/volume.
  double alpha_at(int bin) const;
  double kappa_at(int bin) const;
  double season_factor(int bin) const;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// Trader preferences: terminal penalty A, running penalty phi, exponent gamma.
struct Preferences {
  double A = 0.01;
  double phi = 0.007;
  double gamma = 2.0;

  void validate() const;
};

}  // namespace execlab
