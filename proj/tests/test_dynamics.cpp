#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "execlab/closedform.hpp"
#include "execlab/dynamics.hpp"
#include "execlab/errors.hpp"
#include "execlab/rng.hpp"

using namespace execlab;

namespace {

MarketParams flat(int n = 77) {
  MarketParams mp;
  mp.n_steps = n;
  return mp;
}

Seasonality ones(int n) { return {std::vector<double>(n, 1.0), std::vector<double>(n, 1.0)}; }

// Random but valid controllers for property tests.
ControlFn random_linear(Rng& rng) {
  const double a = 0.2 * uniform01(rng) - 0.1;
  const double b = -0.2 * uniform01(rng);
  return [a, b](const ControlQuery& c) { return a * std::sin(c.t) + b * c.q; };
}

}  // namespace

TEST_CASE("step by hand") {
  MarketParams mp;
  mp.alpha = 0.01;
  mp.kappa = 0.1;
  mp.sigma = 0.2;
  const State s{0, 10.0, -100.0, 0.0};
  const State n = step(s, 5.0, 0.0, mp, 0);
  CHECK(n.S == doctest::Approx(10.05).epsilon(1e-14));
  CHECK(n.Q == -95.0);
  CHECK(n.X == doctest::Approx(-52.5).epsilon(1e-14));
  CHECK(n.step == 1);
}

TEST_CASE("zero trade without noise is the identity") {
  const State s{3, 10.0, -1.0, 4.0};
  const State n = step(s, 0.0, 0.0, flat(), 3);
  CHECK(n.S == s.S);
  CHECK(n.Q == s.Q);
  CHECK(n.X == s.X);
}

TEST_CASE("doubling spread doubles drift and cost") {
  MarketParams base;
  base.alpha = 0.05;
  base.kappa = 0.3;
  base.sigma = 0.0;
  base.n_steps = 3;
  MarketParams seasonal = base;
  // spread 2 and volume 1 in bin 0; the other bins keep the mean at 1
  seasonal.seasonality = Seasonality{{1.0, 1.0, 1.0}, {2.0, 0.5, 0.5}};
  seasonal.validate();
  const State s{0, 10.0, -2.0, 0.0};
  const double nu = 0.7;
  const State a = step(s, nu, 0.0, base, 0);
  const State b = step(s, nu, 0.0, seasonal, 0);
  CHECK((b.S - s.S) == doctest::Approx(2.0 * (a.S - s.S)).epsilon(1e-14));
  CHECK((-b.X - nu * s.S) == doctest::Approx(2.0 * (-a.X - nu * s.S)).epsilon(1e-12));
}

TEST_CASE("seasonality profiles must have mean 1") {
  MarketParams mp = flat(2);
  mp.seasonality = Seasonality{{1.0, 1.0}, {2.0, 0.5}};
  CHECK_THROWS_AS(mp.validate(), ConfigError);
  mp.seasonality = Seasonality{{1.0, 1.0}, {2.0, 0.0}};
  CHECK_THROWS_AS(mp.validate(), ConfigError);
  mp.seasonality = Seasonality{{1.0}, {1.0}};
  CHECK_THROWS_AS(mp.validate(), ConfigError);
}

TEST_CASE("step errors") {
  const MarketParams mp = flat(3);
  CHECK_THROWS_AS(step(State{3, 10, 0, 0}, 0.0, 0.0, mp, 3), HorizonError);
  CHECK_THROWS_AS(step(State{1, 10, 0, 0}, 0.0, 0.0, mp, 2), HorizonError);
  CHECK_THROWS_AS(step(State{0, 10, 0, 0}, NAN, 0.0, mp, 0), NumericError);
}

TEST_CASE("reward of doing nothing") {
  const MarketParams mp = flat();
  const Preferences pref{0.01, 0.007, 2.0};
  const std::vector<double> eps(77, 0.0);
  const auto traj = simulate_path([](const ControlQuery&) { return 0.0; }, mp, pref, 10.0, -1.0, eps);
  CHECK(reward(traj, pref) == doctest::Approx(-10.556).epsilon(1e-13));
}

TEST_CASE("full liquidation leaves only the running penalty") {
  MarketParams mp = flat(4);
  mp.sigma = 0.0;
  const Preferences pref{0.5, 0.01, 2.0};
  const std::vector<double> controls{0.25, 0.25, 0.25, 0.25};
  const auto traj = replay_controls(controls, mp, 10.0, -1.0, std::vector<double>(4, 0.0));
  CHECK(traj.states.back().Q == 0.0);
  double running = 0.0;
  for (const auto& s : traj.states) running += s.Q * s.Q;
  CHECK(reward(traj, pref) == doctest::Approx(traj.states.back().X - 0.01 * running).epsilon(1e-14));
}

TEST_CASE("mtm formula") {
  Trajectory t;
  t.n_steps = 1;
  t.eps = {0.0};
  t.controls = {0.0};
  t.states = {State{0, 10.0, -100.0, 0.0}, State{1, 10.0, -100.0, -1050.0}};
  CHECK(mtm(t) == doctest::Approx(-50.0));
  t.states[1].X = -1000.0;
  CHECK(mtm(t) == 0.0);
  t.states[0].Q = 0.0;
  CHECK(mtm(t) == 0.0);
}

TEST_CASE("mtm of uniform liquidation equals summed costs") {
  MarketParams mp = flat(5);
  mp.alpha = 0.02;
  mp.kappa = 0.4;
  mp.sigma = 0.3;
  const double q0 = -10.0;
  const std::vector<double> controls(5, 2.0);
  const auto traj = replay_controls(controls, mp, 10.0, q0, std::vector<double>(5, 0.0));
  // price after k trades is s0 + alpha * 2 * k; each trade costs 2 * (S_k + 2 kappa)
  double paid = 0.0;
  for (int k = 0; k < 5; ++k) paid += 2.0 * (10.0 + mp.alpha * 2.0 * k + mp.kappa * 2.0);
  CHECK(mtm(traj) == doctest::Approx(-(q0 * 10.0 + paid)).epsilon(1e-13));
}

TEST_CASE("incomplete trajectories are rejected") {
  Trajectory t;
  t.n_steps = 3;
  t.states = {State{}};
  CHECK_THROWS_AS(reward(t, Preferences{}), ConfigError);
  CHECK_THROWS_AS(mtm(t), ConfigError);
}

TEST_CASE("rollout: zero controller keeps inventory constant") {
  const auto batch = rollout([](const ControlQuery&) { return 0.0; }, flat(), Preferences{}, 8, 5);
  for (const auto& p : batch.paths)
    for (const auto& s : p.states) CHECK(s.Q == -1.0);
}

TEST_CASE("rollout is deterministic and thread-count independent") {
  const auto sol = solve(flat(), Preferences{});
  const auto ctl = as_controller(sol);
  InitialConditions init;
  init.q0 = {-1.0, -0.5, -0.2, -0.9};
  const auto a = rollout(ctl, flat(), Preferences{}, 4, 9, init, 1);
  const auto b = rollout(ctl, flat(), Preferences{}, 4, 9, init, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.paths[i].eps == b.paths[i].eps);
    CHECK(a.paths[i].controls == b.paths[i].controls);
    for (std::size_t k = 0; k < a.paths[i].states.size(); ++k) {
      CHECK(a.paths[i].states[k].S == b.paths[i].states[k].S);
      CHECK(a.paths[i].states[k].X == b.paths[i].states[k].X);
    }
  }
  const auto noise = draw_noise(flat(), 4, 9);
  CHECK(noise[2] == a.paths[2].eps);
}

TEST_CASE("rollout names the step of a non-finite control") {
  const ControlFn bad = [](const ControlQuery& c) { return c.step == 4 ? NAN : 0.0; };
  try {
    rollout(bad, flat(), Preferences{}, 1, 1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 4") != std::string::npos);
  }
}

TEST_CASE("property: stored transitions replay exactly and identities hold") {
  Rng gen = make_rng(77, 0);
  for (int trial = 0; trial < 25; ++trial) {
    MarketParams mp = flat(10 + static_cast<int>(uniform01(gen) * 70));
    mp.alpha = 0.001 + 0.1 * uniform01(gen);
    mp.kappa = 0.1 + uniform01(gen);
    mp.sigma = 0.5 * uniform01(gen);
    mp.dt = 0.5 + uniform01(gen);
    const auto ctl = random_linear(gen);
    InitialConditions init;
    init.q0 = {-1.0 + 2.0 * uniform01(gen)};
    const auto batch = rollout(ctl, mp, Preferences{}, 3, trial, init);
    for (const auto& p : batch.paths) {
      double cash = 0.0;
      double traded = 0.0;
      for (int k = 0; k < mp.n_steps; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const State n = step(p.states[ks], p.controls[ks], p.eps[ks], mp, k);
        CHECK(n.S == p.states[ks + 1].S);
        CHECK(n.Q == p.states[ks + 1].Q);
        CHECK(n.X == p.states[ks + 1].X);
        cash -= p.controls[ks] * (p.states[ks].S + mp.kappa * p.controls[ks]) * mp.dt;
        traded += p.controls[ks] * mp.dt;
      }
      CHECK(p.states.back().X == cash);
      CHECK(std::fabs((p.states.back().Q - p.states.front().Q) - traded) <= 1e-12);
    }
  }
}

TEST_CASE("property: unit seasonality equals the profile-free path bit-for-bit") {
  Rng gen = make_rng(78, 0);
  for (int trial = 0; trial < 10; ++trial) {
    MarketParams mp = flat(20);
    mp.alpha = 0.1 * uniform01(gen) + 1e-3;
    MarketParams ms = mp;
    ms.seasonality = ones(20);
    const auto ctl = random_linear(gen);
    const auto a = rollout(ctl, mp, Preferences{}, 2, trial);
    const auto b = rollout(ctl, ms, Preferences{}, 2, trial);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t k = 0; k <= 20; ++k) {
        CHECK(a.paths[i].states[k].S == b.paths[i].states[k].S);
        CHECK(a.paths[i].states[k].X == b.paths[i].states[k].X);
      }
  }
}

TEST_CASE("property: reward strictly decreases in the penalties") {
  Rng gen = make_rng(79, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto ctl = random_linear(gen);
    const auto batch = rollout(ctl, flat(), Preferences{}, 1, trial);
    const auto& p = batch.paths[0];
    const double gamma = uniform01(gen) < 0.5 ? 2.0 : 1.5;
    const Preferences lo{0.001 + uniform01(gen) * 0.01, 0.001 + uniform01(gen) * 0.01, gamma};
    Preferences hiA = lo;
    hiA.A *= 1.5;
    Preferences hiPhi = lo;
    hiPhi.phi *= 1.5;
    if (p.states.back().Q != 0.0) CHECK(reward(p, hiA) < reward(p, lo));
    CHECK(reward(p, hiPhi) < reward(p, lo));
  }
}

TEST_CASE("closed-form mean reward agrees with the value function") {
  const MarketParams mp = flat();
  const Preferences pref{0.01, 0.007, 2.0};
  const auto sol = solve(mp, pref);
  const auto batch = rollout(as_controller(sol), mp, pref, 20000, 2024, {10.0, {-1.0}}, 2);
  double sum = 0.0;
  double sq = 0.0;
  double drift = 0.0;
  double drift_sq = 0.0;
  for (const auto& p : batch.paths) {
    const double r = reward(p, pref);
    sum += r;
    sq += r * r;
    const double d = (p.states.back().S - p.states.front().S) - mp.alpha * (p.states.back().Q - p.states.front().Q);
    drift += d;
    drift_sq += d * d;
  }
  const double n = static_cast<double>(batch.paths.size());
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  // Discrete dynamics differ from the continuous value function by O(dt); the
  // running sum also has one extra term. The comparison tolerance covers
  // both plus four standard errors.
  const double v = value(sol, 0.0, 0.0, 10.0, -1.0);
  CHECK(std::fabs(mean - v) <= 4.0 * se + 0.02 * std::fabs(v + 10.0));
  const double dmean = drift / n;
  const double dse = std::sqrt((drift_sq / n - dmean * dmean) / n);
  CHECK(std::fabs(dmean) <= 4.0 * dse);
}
