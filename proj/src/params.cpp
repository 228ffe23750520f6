#include "execlab/params.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "execlab/errors.hpp"

namespace execlab {

namespace {

void check_profile(const std::vector<double>& p, int n_steps, const char* name) {
  if (static_cast<int>(p.size()) != n_steps) {
    throw ConfigError(std::string(name) + " has length " + std::to_string(p.size()) + ", expected n_steps = " +
                      std::to_string(n_steps));
  }
  for (double v : p) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " entries must be finite and > 0");
  }
  const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
  if (std::fabs(mean - 1.0) > 1e-9) {
    throw ConfigError(std::string(name) + " must have mean 1 (got " + std::to_string(mean) + ")");
  }
}

}  // namespace

double MarketParams::season_factor(int bin) const {
  if (!seasonality) return 1.0;
  const auto i = static_cast<std::size_t>(bin);
  return seasonality->spread_profile[i] / seasonality->volume_profile[i];
}

double MarketParams::alpha_at(int bin) const {
  if (!seasonality) return alpha;
  return alpha * season_factor(bin);
}

double MarketParams::kappa_at(int bin) const {
  if (!seasonality) return kappa;
  return kappa * season_factor(bin);
}

void MarketParams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("market.alpha must be > 0");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw ConfigError("market.kappa must be > 0");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("market.sigma must be >= 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("market.dt must be > 0");
  if (n_steps < 1) throw ConfigError("market.n_steps must be >= 1");
  if (seasonality) {
    check_profile(seasonality->volume_profile, n_steps, "volume_profile");
    check_profile(seasonality->spread_profile, n_steps, "spread_profile");
  }
}

void Preferences::validate() const {
  if (!(A > 0.0) || !std::isfinite(A)) throw ConfigError("preferences.A must be > 0");
  if (!(phi > 0.0) || !std::isfinite(phi)) throw ConfigError("preferences.phi must be > 0");
  if (!(gamma > 1.0) || !std::isfinite(gamma)) throw ConfigError("preferences.gamma must be > 1");
}

}  // namespace execlab
