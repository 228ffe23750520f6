#pragma once

// Independent reference formulas used only by the tests.

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

// Constant-coefficient Riccati solution in closed form.
// With y = alpha + h2 the equation reduces to dy/dtau = (y^2 - r^2) / (2 kappa),
// tau = T - t, r = 2 sqrt(kappa phi_rate), y(0) = alpha - 2A.
// Returns nullopt past a pole.
inline std::optional<double> riccati_h2(double alpha, double kappa, double phi_rate, double A, double tau) {
  const double y0 = alpha - 2.0 * A;
  const double r = 2.0 * std::sqrt(kappa * phi_rate);
  double y;
  if (r == 0.0) {
    const double den = 1.0 - y0 * tau / (2.0 * kappa);
    if (den <= 0.0) return std::nullopt;
    y = y0 / den;
  } else if (y0 == r || y0 == -r) {
    y = y0;
  } else if (std::fabs(y0) < r) {
    y = -r * std::tanh(r * tau / (2.0 * kappa) + std::atanh(-y0 / r));
  } else {
    const double u = r * tau / (2.0 * kappa) + std::atanh(-r / y0);
    if (y0 > 0.0 && u >= 0.0) return std::nullopt;
    y = -r / std::tanh(u);
  }
  return y - alpha;
}

// Time to the pole of the backward solution, infinite when there is none.
inline double riccati_pole_tau(double alpha, double kappa, double phi_rate, double A) {
  const double y0 = alpha - 2.0 * A;
  const double r = 2.0 * std::sqrt(kappa * phi_rate);
  if (y0 <= r) return std::numeric_limits<double>::infinity();
  if (r == 0.0) return 2.0 * kappa / y0;
  return -2.0 * kappa * std::atanh(-r / y0) / r;
}

// Plain OLS with intercept, no centering tricks.
struct Line {
  double intercept;
  double slope;
  double r2;
};

inline Line fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  long double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  const auto n = static_cast<long double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    sxy += static_cast<long double>(x[i]) * y[i];
    syy += static_cast<long double>(y[i]) * y[i];
  }
  const long double cxx = sxx - sx * sx / n;
  const long double cxy = sxy - sx * sy / n;
  const long double cyy = syy - sy * sy / n;
  const long double slope = cxy / cxx;
  const long double intercept = (sy - slope * sx) / n;
  const long double r2 = cyy > 0 ? cxy * cxy / (cxx * cyy) : 1.0L;
  return {static_cast<double>(intercept), static_cast<double>(slope), static_cast<double>(r2)};
}

}  // namespace oracle
