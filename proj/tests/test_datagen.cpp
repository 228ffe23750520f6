#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "execlab/datagen.hpp"
#include "execlab/dynamics.hpp"
#include "execlab/errors.hpp"
#include "execlab/io.hpp"
#include "execlab/train.hpp"

using namespace execlab;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "execlab_test_datagen";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// ~1e5 bins with pure noise returns: no impact term, no dominant bins.
GenConfig noise_only(double ac1, bool gaussian) {
  GenConfig cfg;
  cfg.n_stocks = 4;
  cfg.n_days = 325;
  cfg.alpha_bar = 0.0;
  cfg.dominant_rate = 0.0;
  cfg.odd_lot_rate = 0.0;
  cfg.ac1 = ac1;
  cfg.gaussian = gaussian;
  cfg.seed = 21;
  return cfg;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  std::size_t n = 0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = v.size();
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(m.n);
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(m.n - 1);
  return m;
}

}  // namespace

TEST_CASE("default profiles are positive with mean one") {
  for (int n : {1, 10, 77, 78}) {
    for (const auto& p : {default_volume_profile(n), default_spread_profile(n)}) {
      REQUIRE(p.size() == static_cast<std::size_t>(n));
      double mean = 0.0;
      for (double v : p) {
        CHECK(v > 0.0);
        mean += v;
      }
      CHECK(std::fabs(mean / n - 1.0) <= 1e-9);
    }
  }
  const auto u = default_volume_profile(77);
  CHECK(u.front() > u[38]);
  CHECK(u.back() > u[38]);
}

TEST_CASE("configuration validation") {
  GenConfig cfg;
  cfg.tail_dof = 2.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.gaussian = true;
  CHECK_NOTHROW(cfg.validate());
  cfg = GenConfig{};
  cfg.ac1 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GenConfig{};
  cfg.volume_profile = std::vector<double>(77, 1.1);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.volume_profile = std::vector<double>(5, 1.0);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("white noise surrogate has no lag-one autocorrelation") {
  const auto data = generate(noise_only(0.0, true));
  CHECK(data.truth.bins.size() >= 100000);
  CHECK(std::fabs(lag1_autocorrelation(data.truth, true)) <= 0.02);
}

TEST_CASE("configured mean reversion is reproduced") {
  const auto data = generate(noise_only(-0.1, false));
  CHECK(std::fabs(lag1_autocorrelation(data.truth, true) + 0.1) <= 0.02);
}

TEST_CASE("student-t noise at four degrees of freedom is heavy tailed") {
  const auto data = generate(noise_only(-0.05, false));
  CHECK(excess_kurtosis(data.truth, true) > 3.0);
}

TEST_CASE("the default configuration keeps the configured autocorrelation") {
  GenConfig cfg;
  cfg.n_days = 325;
  cfg.ac1 = -0.1;
  const auto data = generate(cfg);
  CHECK(std::fabs(lag1_autocorrelation(data.truth, true) + 0.1) <= 0.02);
}

TEST_CASE("same seed, same bytes; thread count does not matter") {
  GenConfig cfg;
  cfg.n_days = 3;
  cfg.missing_rate = 0.05;
  const auto a = generate(cfg);
  cfg.threads = 3;
  const auto b = generate(cfg);
  write_trades_csv(a.trades, scratch("a_trades.csv"));
  write_trades_csv(b.trades, scratch("b_trades.csv"));
  write_quotes_csv(a.quotes, scratch("a_quotes.csv"));
  write_quotes_csv(b.quotes, scratch("b_quotes.csv"));
  write_truth_csv(a, scratch("a_truth.csv"));
  write_truth_csv(b, scratch("b_truth.csv"));
  for (const char* f : {"trades", "quotes", "truth"})
    CHECK(io::read_text(scratch(std::string("a_") + f + ".csv")) == io::read_text(scratch(std::string("b_") + f + ".csv")));
  cfg.seed = 2;
  write_trades_csv(generate(cfg).trades, scratch("c_trades.csv"));
  CHECK(io::read_text(scratch("a_trades.csv")) != io::read_text(scratch("c_trades.csv")));
}

TEST_CASE("dominant bins are marked and one-sided") {
  GenConfig cfg;
  cfg.n_days = 10;
  cfg.dominant_rate = 0.25;
  const auto data = generate(cfg);
  REQUIRE(data.plants.size() == data.truth.bins.size());
  std::size_t n_dom = 0;
  for (std::size_t i = 0; i < data.plants.size(); ++i) {
    if (!data.plants[i].dominant) continue;
    ++n_dom;
    const Bin& b = data.truth.bins[i];
    CHECK(std::min(b.buy_vol, b.sell_vol) == 0.0);
  }
  const double rate = static_cast<double>(n_dom) / static_cast<double>(data.plants.size());
  CHECK(rate == doctest::Approx(0.25).epsilon(0.15));
}

TEST_CASE("realised bin volumes follow the volume profile") {
  GenConfig cfg;
  cfg.n_stocks = 1;
  cfg.n_days = 200;
  cfg.dominant_rate = 0.0;
  const auto data = generate(cfg);
  const auto prof = compute_profiles(data.truth).stocks.begin()->second;
  const double scale = prof.avg_volume[38] / data.volume_profile[38];
  for (std::size_t k = 0; k < prof.avg_volume.size(); ++k)
    CHECK(prof.avg_volume[k] / data.volume_profile[k] == doctest::Approx(scale).epsilon(0.1));
}

TEST_CASE("replay export round trips the bin increments") {
  GenConfig cfg;
  cfg.n_days = 4;
  cfg.missing_rate = 0.01;
  const auto data = generate(cfg);
  std::vector<std::string> log;
  const auto path = scratch("replay.csv");
  const auto paths = export_replay(data.truth, path, &log);
  const auto loaded = NoiseSource::load_replay(path, cfg.n_steps);
  REQUIRE(loaded.size() == paths.size());
  std::size_t complete_days = 0;
  std::size_t idx = 0;
  for (std::size_t start = 0; start < data.truth.bins.size(); start += 77) {
    bool complete = true;
    for (std::size_t k = 0; k < 77; ++k) complete = complete && !data.truth.bins[start + k].missing;
    if (!complete) continue;
    ++complete_days;
    for (std::size_t k = 0; k < 77; ++k) CHECK(std::fabs(loaded.path(idx)[k] - data.truth.bins[start + k].dS) <= 1e-12);
    ++idx;
  }
  CHECK(complete_days == paths.size());
  CHECK(log.size() == data.truth.bins.size() / 77 - complete_days);
}

TEST_CASE("flat-profile replay matches Gaussian noise in mean and variance") {
  GenConfig cfg;
  cfg.n_stocks = 1;
  cfg.n_days = 400;
  cfg.gaussian = true;
  cfg.ac1 = 0.0;
  cfg.alpha_bar = 0.0;
  cfg.dominant_rate = 0.0;
  cfg.price_grid = 0.0;
  cfg.volume_profile = std::vector<double>(77, 1.0);
  cfg.spread_profile = std::vector<double>(77, 1.0);
  const auto data = generate(cfg);
  std::vector<double> replay;
  for (const auto& day : replay_paths(data.truth))
    for (double v : day) replay.push_back(v);

  MarketParams mp;
  mp.sigma = cfg.sigma_bar * cfg.base_spread;  // per-bin sd of the generated increments
  std::vector<double> gauss;
  for (const auto& row : draw_noise(mp, 400, 5))
    for (double e : row) gauss.push_back(mp.sigma * std::sqrt(mp.dt) * e);

  const Moments a = moments(replay);
  const Moments b = moments(gauss);
  const double se_mean = std::sqrt(a.var / a.n + b.var / b.n);
  CHECK(std::fabs(a.mean - b.mean) <= 3.0 * se_mean);
  // log variance ratio has sd ~ sqrt(2/(n-1) + 2/(m-1)) for normal samples
  const double se_logvar = std::sqrt(2.0 / (a.n - 1) + 2.0 / (b.n - 1));
  CHECK(std::fabs(std::log(a.var / b.var)) <= 3.0 * se_logvar);
}
