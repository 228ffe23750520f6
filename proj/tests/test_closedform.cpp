#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "execlab/closedform.hpp"
#include "execlab/errors.hpp"
#include "execlab/rng.hpp"
#include "oracles.hpp"

using namespace execlab;

namespace {

double sup_error_vs_oracle(const MarketParams& mp, const Preferences& pref) {
  const auto sol = solve(mp, pref);
  double worst = 0.0;
  for (std::size_t k = 0; k < sol.t_grid.size(); ++k) {
    const auto ref = oracle::riccati_h2(mp.alpha, mp.kappa, running_penalty_rate(mp, pref), pref.A,
                                        sol.horizon() - sol.t_grid[k]);
    REQUIRE(ref.has_value());
    worst = std::max(worst, std::fabs(sol.h2[k] - *ref));
  }
  return worst;
}

}  // namespace

TEST_CASE("terminal conditions are exact and h0, h1 vanish") {
  const auto sol = solve(MarketParams{}, Preferences{0.01, 0.007, 2.0});
  REQUIRE(sol.t_grid.size() == 78);
  CHECK(sol.h2.back() == -0.02);
  CHECK(sol.t_grid.back() == 77.0);
  for (std::size_t k = 0; k < sol.h0.size(); ++k) {
    CHECK(sol.h0[k] == 0.0);
    CHECK(sol.h1[k] == 0.0);
  }
}

TEST_CASE("generic parameters match the analytic Riccati solution") {
  MarketParams mp;
  mp.kappa = 0.5;
  mp.alpha = 0.1;
  CHECK(sup_error_vs_oracle(mp, Preferences{0.01, 0.007, 2.0}) <= 1e-8);
}

TEST_CASE("terminal value beyond the stable root, below the pole") {
  MarketParams mp;
  mp.alpha = 0.01;
  // alpha - 2A below -r: the coth branch, decaying towards the root
  CHECK(sup_error_vs_oracle(mp, Preferences{0.1, 0.001, 2.0}) <= 1e-8);
}

TEST_CASE("steep terminal penalties converge at fourth order in the sub-step count") {
  MarketParams mp;
  const Preferences pref{0.5, 0.001, 2.0};
  const double rate = running_penalty_rate(mp, pref);
  auto err = [&](int k) {
    const auto sol = solve(mp, pref, SolveOptions{k});
    double worst = 0.0;
    for (std::size_t i = 0; i < sol.t_grid.size(); ++i)
      worst = std::max(worst, std::fabs(sol.h2[i] - *oracle::riccati_h2(mp.alpha, mp.kappa, rate, pref.A, 77.0 - sol.t_grid[i])));
    return worst;
  };
  const double e10 = err(10);
  const double e20 = err(20);
  CHECK(e10 / e20 > 12.0);
  CHECK(e10 / e20 < 20.0);
  CHECK(err(40) <= 1e-8);
}

TEST_CASE("stationary root pins h2 and gives a constant rate") {
  MarketParams mp;
  mp.alpha = 0.01;
  mp.kappa = 1.0;
  const double phi = 0.0049;
  const double A = (mp.alpha + 2.0 * std::sqrt(mp.kappa * phi)) / 2.0;
  const auto sol = solve(mp, Preferences{A, phi, 2.0});
  double worst = 0.0;
  for (double h : sol.h2) worst = std::max(worst, std::fabs(h - sol.h2.back()));
  CHECK(worst <= 1e-12);
  for (double t : {0.0, 13.0, 40.5, 77.0})
    CHECK(control(sol, t, -0.8) == doctest::Approx(std::sqrt(phi / mp.kappa) * 0.8).epsilon(1e-10));

  for (double f : {0.1, 0.5, 0.9, 0.99}) {
    const int expected = static_cast<int>(std::ceil(std::log(1.0 - f) / std::log(1.0 - std::sqrt(phi / mp.kappa) * mp.dt)));
    CHECK(time_to_fraction(sol, mp, -1.0, f) == expected);
  }
}

TEST_CASE("control basics") {
  const auto sol = solve(MarketParams{}, Preferences{});
  CHECK(control(sol, 10.0, 0.0) == 0.0);
  CHECK(control(sol, 10.0, -2.0) == doctest::Approx(2.0 * control(sol, 10.0, -1.0)).epsilon(1e-15));
  CHECK(control(sol, 5.0, -1.0) == doctest::Approx((0.01 + sol.h2[5]) / 2.0 * -1.0).epsilon(1e-15));
  const double mid = control(sol, 5.5, -1.0);
  CHECK(mid == doctest::Approx(-(0.01 + 0.5 * (sol.h2[5] + sol.h2[6])) / 2.0).epsilon(1e-14));
  CHECK_THROWS_AS(control(sol, -0.1, 1.0), RangeError);
  CHECK_THROWS_AS(control(sol, 77.5, 1.0), RangeError);
  CHECK_THROWS_AS(value(sol, 78.0, 0.0, 10.0, 1.0), RangeError);
}

TEST_CASE("value function at the horizon and at zero inventory") {
  const Preferences pref{0.03, 0.002, 2.0};
  const auto sol = solve(MarketParams{}, pref);
  CHECK(value(sol, 77.0, 1.5, 10.0, -2.0) == doctest::Approx(1.5 - 20.0 - 0.03 * 4.0).epsilon(1e-15));
  CHECK(value(sol, 20.0, 1.5, 10.0, 0.0) == 1.5);
}

TEST_CASE("gamma other than 2 is unsupported") {
  CHECK_THROWS_AS(solve(MarketParams{}, Preferences{0.01, 0.007, 1.5}), UnsupportedError);
  CHECK_THROWS_AS(solve(MarketParams{}, Preferences{0.0, 0.007, 2.0}), ConfigError);
}

TEST_CASE("blow-up is reported with its time") {
  MarketParams mp;
  mp.alpha = 0.5;
  const Preferences pref{1e-4, 1e-4, 2.0};
  const double tau = oracle::riccati_pole_tau(mp.alpha, mp.kappa, 1e-4, pref.A);
  REQUIRE(tau < 77.0);
  try {
    solve(mp, pref);
    FAIL("expected SingularityError");
  } catch (const SingularityError& e) {
    CHECK(std::fabs(e.blowup_time() - (77.0 - tau)) <= 0.2);
  }
}

TEST_CASE("time_to_fraction edge cases") {
  const auto sol = solve(MarketParams{}, Preferences{});
  CHECK(time_to_fraction(sol, MarketParams{}, -1.0, 1e-15) == 0);
  CHECK_THROWS_AS(time_to_fraction(sol, MarketParams{}, -1.0, 0.0), ConfigError);
  // a tiny penalty never gets all the way
  const auto lazy = solve(MarketParams{}, Preferences{1e-4, 7e-5, 2.0});
  CHECK(time_to_fraction(lazy, MarketParams{}, -1.0, 1.0) == 78);
}

TEST_CASE("execution time is non-increasing in both penalties") {
  const std::vector<double> As{0.0001, 0.001, 0.01};
  const std::vector<double> phis{7e-5, 7e-4, 0.001, 0.004, 0.007, 0.07};
  std::vector<std::vector<int>> k(As.size(), std::vector<int>(phis.size()));
  for (std::size_t i = 0; i < As.size(); ++i)
    for (std::size_t j = 0; j < phis.size(); ++j)
      k[i][j] = time_to_fraction(solve(MarketParams{}, Preferences{As[i], phis[j], 2.0}), MarketParams{}, -1.0, 0.9);
  for (std::size_t i = 0; i < As.size(); ++i)
    for (std::size_t j = 0; j < phis.size(); ++j) {
      if (i + 1 < As.size()) CHECK(k[i + 1][j] <= k[i][j]);
      if (j + 1 < phis.size()) CHECK(k[i][j + 1] <= k[i][j]);
    }
}

TEST_CASE("property: oracle agreement and negative slope on random parameters") {
  Rng gen = make_rng(404, 0);
  int tested = 0;
  while (tested < 40) {
    MarketParams mp;
    mp.alpha = std::exp(std::log(1e-3) + uniform01(gen) * std::log(100.0));
    mp.kappa = 0.1 + 2.0 * uniform01(gen);
    mp.dt = 0.5 + uniform01(gen);
    mp.n_steps = 10 + static_cast<int>(uniform01(gen) * 90);
    Preferences pref;
    pref.phi = std::exp(std::log(1e-5) + uniform01(gen) * std::log(1e4));
    // 2A > alpha keeps the terminal slope negative
    pref.A = mp.alpha / 2.0 * (1.0 + 0.01 + 5.0 * uniform01(gen));
    const auto sol = solve(mp, pref);
    CHECK(sup_error_vs_oracle(mp, pref) <= 1e-8);
    bool increasing = true;
    bool decreasing = true;
    for (std::size_t k = 0; k < sol.h2.size(); ++k) {
      CHECK((mp.alpha + sol.h2[k]) / (2.0 * mp.kappa) < 0.0);
      if (k > 0) {
        increasing = increasing && sol.h2[k] >= sol.h2[k - 1];
        decreasing = decreasing && sol.h2[k] <= sol.h2[k - 1];
      }
    }
    CHECK((increasing || decreasing));
    ++tested;
  }
}

TEST_CASE("piecewise seasonal coefficients reduce to the flat case for unit profiles") {
  MarketParams mp;
  MarketParams ms = mp;
  ms.seasonality = Seasonality{std::vector<double>(77, 1.0), std::vector<double>(77, 1.0)};
  const auto a = solve(mp, Preferences{});
  const auto b = solve(ms, Preferences{});
  CHECK(a.h2 == b.h2);
}
