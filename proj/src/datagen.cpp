#include "execlab/datagen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "execlab/errors.hpp"
#include "execlab/io.hpp"
#include "execlab/parallel.hpp"
#include "execlab/rng.hpp"
#include "execlab/train.hpp"

namespace execlab {

namespace {

constexpr std::int64_t kOpenUs = 9LL * 3600 * 1000000 + 30LL * 60 * 1000000;
constexpr std::int64_t kBinUs = 5LL * 60 * 1000000;
constexpr std::int64_t kSecond = 1000000;

std::vector<double> unit_mean(std::vector<double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double& x : v) x /= mean;
  return v;
}

// Marsaglia-Tsang; shape >= 1 directly, smaller shapes via the u^(1/a) boost.
double gamma_draw(Rng& rng, double shape) {
  if (shape < 1.0) {
    const double u = uniform01(rng);
    return gamma_draw(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Unit-variance innovation.
double innovation(Rng& rng, const GenConfig& cfg) {
  const double z = standard_normal(rng);
  if (cfg.gaussian) return z;
  const double nu = cfg.tail_dof;
  const double chi2 = 2.0 * gamma_draw(rng, 0.5 * nu);
  return z / std::sqrt(chi2 / nu) * std::sqrt((nu - 2.0) / nu);
}

double on_grid(double v, double grid) { return grid > 0.0 ? std::round(v / grid) * grid : v; }

std::int64_t round_lots(double v) { return std::max<std::int64_t>(0, std::llround(v / 100.0)) * 100; }

// Splits a round-lot volume into `pieces` round-lot prints (fewer when too small).
std::vector<std::int64_t> split_lots(Rng& rng, std::int64_t volume, int pieces) {
  std::int64_t lots = volume / 100;
  std::vector<std::int64_t> out;
  if (lots <= 0) return out;
  pieces = static_cast<int>(std::min<std::int64_t>(pieces, lots));
  std::vector<std::int64_t> cuts;
  for (int i = 0; i < pieces; ++i) cuts.push_back(1);
  lots -= pieces;
  while (lots > 0) {
    cuts[static_cast<std::size_t>(uniform01(rng) * pieces)] += 1;
    --lots;
  }
  for (auto c : cuts) out.push_back(c * 100);
  return out;
}

std::string date_string(const std::string& start, int offset) {
  using namespace std::chrono;
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (std::sscanf(start.c_str(), "%d-%u-%u", &y, &m, &d) != 3) throw ConfigError("start_date must be YYYY-MM-DD");
  const year_month_day start_ymd{year{y}, month{m}, day{d}};
  if (!start_ymd.ok()) throw ConfigError("start_date is not a valid date");
  const year_month_day ymd{sys_days{start_ymd} + days{offset}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

struct PlannedTrade {
  int side = 0;
  std::int64_t size = 0;
  bool odd = false;
};

// Everything drawn before the price path is known.
struct BinPlan {
  bool missing = false;
  bool dominant = false;
  int dom_side = 1;
  double half_spread = 0.0;
  std::vector<PlannedTrade> prints;  // in time order, odd lots included
};

struct DayOutput {
  std::vector<TradeRecord> trades;
  std::vector<QuoteRecord> quotes;
  std::vector<Bin> bins;
  std::vector<PlantInfo> plants;
};

}  // namespace

void GenConfig::validate() const {
  if (n_stocks < 1 || n_days < 1 || n_steps < 1) throw ConfigError("gen: n_stocks, n_days, n_steps must be >= 1");
  if (static_cast<std::int64_t>(n_steps) * kBinUs + kOpenUs > 24LL * 3600 * kSecond) {
    throw ConfigError("gen: session does not fit in a day");
  }
  auto check_profile = [&](const std::vector<double>& p, const char* name) {
    if (p.empty()) return;
    if (static_cast<int>(p.size()) != n_steps) throw ConfigError(std::string("gen: ") + name + " length != n_steps");
    for (double v : p) {
      if (!(v > 0.0)) throw ConfigError(std::string("gen: ") + name + " entries must be > 0");
    }
    const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
    if (std::fabs(mean - 1.0) > 1e-9) throw ConfigError(std::string("gen: ") + name + " must have mean 1");
  };
  check_profile(volume_profile, "volume_profile");
  check_profile(spread_profile, "spread_profile");
  if (!gaussian && !(tail_dof > 2.0)) throw ConfigError("gen: tail_dof must be > 2");
  if (!(std::fabs(ac1) < 1.0)) throw ConfigError("gen: |ac1| must be < 1");
  if (!(sigma_bar >= 0.0) || !(kappa_noise >= 0.0)) throw ConfigError("gen: noise scales must be >= 0");
  if (!(dominant_rate >= 0.0 && dominant_rate <= 1.0) || !(missing_rate >= 0.0 && missing_rate < 1.0) ||
      !(odd_lot_rate >= 0.0 && odd_lot_rate <= 1.0)) {
    throw ConfigError("gen: rates must lie in [0, 1]");
  }
  if (!(base_volume >= 1000.0) || !(base_spread > 0.0) || !(s0 > 0.0)) {
    throw ConfigError("gen: base_volume >= 1000, base_spread > 0 and s0 > 0 required");
  }
  if (!(price_grid >= 0.0) || !(dt > 0.0)) throw ConfigError("gen: price_grid >= 0 and dt > 0 required");
  if (threads < 1) throw ConfigError("gen: threads must be >= 1");
  date_string(start_date, 0);
}

std::vector<double> default_volume_profile(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  const double c = 0.5 * (n - 1);
  for (int t = 0; t < n; ++t) {
    const double z = c > 0.0 ? (t - c) / c : 0.0;
    v[static_cast<std::size_t>(t)] = 1.0 + 1.2 * z * z;
  }
  return unit_mean(std::move(v));
}

std::vector<double> default_spread_profile(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) v[static_cast<std::size_t>(t)] = 1.0 + 1.5 * std::exp(-t / 6.0);
  return unit_mean(std::move(v));
}

GeneratedData generate(const GenConfig& cfg) {
  cfg.validate();
  GeneratedData out;
  out.volume_profile = cfg.volume_profile.empty() ? default_volume_profile(cfg.n_steps) : cfg.volume_profile;
  out.spread_profile = cfg.spread_profile.empty() ? default_spread_profile(cfg.n_steps) : cfg.spread_profile;
  const auto n = static_cast<std::size_t>(cfg.n_steps);
  const auto n_cells = static_cast<std::size_t>(cfg.n_stocks) * static_cast<std::size_t>(cfg.n_days);
  const double g = cfg.price_grid;

  std::vector<std::string> symbols;
  for (int s = 0; s < cfg.n_stocks; ++s) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "SYN%03d", s);
    symbols.emplace_back(buf);
  }
  std::vector<std::string> dates;
  for (int d = 0; d < cfg.n_days; ++d) dates.push_back(date_string(cfg.start_date, d));

  // Pass 1: volumes, spreads and print layout for every (stock, day, bin).
  std::vector<Rng> rngs(n_cells);
  std::vector<std::vector<BinPlan>> plans(n_cells);
  parallel_for(n_cells, cfg.threads, [&](std::size_t cell) {
    const int s = static_cast<int>(cell / static_cast<std::size_t>(cfg.n_days));
    Rng rng = make_rng(cfg.seed, cell);
    const double v_stock = cfg.base_volume * (1.0 + 0.5 * s);
    const double psi_stock = cfg.base_spread * (1.0 + 0.25 * s);
    auto& day = plans[cell];
    day.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      BinPlan& p = day[t];
      p.missing = uniform01(rng) < cfg.missing_rate;
      p.dominant = uniform01(rng) < cfg.dominant_rate;
      p.dom_side = uniform01(rng) < 0.5 ? 1 : -1;
      const double spread = psi_stock * out.spread_profile[t] * std::exp(0.2 * standard_normal(rng) - 0.02);
      p.half_spread = std::max(on_grid(0.5 * spread, g), g > 0.0 ? g : 1e-9);
      const double v_bin = v_stock * out.volume_profile[t];
      std::vector<PlannedTrade> lots;
      if (p.dominant) {
        const std::int64_t v_dom = std::max<std::int64_t>(200, round_lots(v_bin * (3.0 + 9.0 * uniform01(rng))));
        const int pieces = 2 + static_cast<int>(uniform01(rng) * 4.0);
        for (auto sz : split_lots(rng, v_dom, pieces)) lots.push_back({p.dom_side, sz, false});
      } else {
        const double v = v_bin * std::exp(0.3 * standard_normal(rng) - 0.045);
        const double b = std::clamp(0.5 + 0.15 * standard_normal(rng), 0.05, 0.95);
        std::int64_t buy = round_lots(v * b);
        std::int64_t sell = round_lots(v * (1.0 - b));
        if (buy + sell < 200) buy = 200 - sell;
        const int pieces = 2 + static_cast<int>(uniform01(rng) * 6.0);
        const auto buy_prints = split_lots(rng, buy, std::max(1, static_cast<int>(pieces * b)));
        const auto sell_prints = split_lots(rng, sell, std::max(1, pieces - static_cast<int>(pieces * b)));
        for (auto sz : buy_prints) lots.push_back({1, sz, false});
        for (auto sz : sell_prints) lots.push_back({-1, sz, false});
        // Random interleaving of buys and sells.
        for (std::size_t i = lots.size(); i > 1; --i) {
          const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
          std::swap(lots[i - 1], lots[std::min(j, i - 1)]);
        }
      }
      if (uniform01(rng) < cfg.odd_lot_rate) {
        const PlannedTrade odd{uniform01(rng) < 0.5 ? 1 : -1, 1 + static_cast<std::int64_t>(uniform01(rng) * 99.0),
                               true};
        lots.insert(lots.begin() + static_cast<std::ptrdiff_t>(lots.size() / 2), odd);
      }
      p.prints = std::move(lots);
    }
    rngs[cell] = rng;
  });

  // Profiles from the pass-1 volumes and spreads, computed exactly as the
  // estimator will compute them from the binned records.
  BinSeries layout;
  layout.n_steps = cfg.n_steps;
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    const auto s = cell / static_cast<std::size_t>(cfg.n_days);
    const auto d = cell % static_cast<std::size_t>(cfg.n_days);
    for (std::size_t t = 0; t < n; ++t) {
      const BinPlan& p = plans[cell][t];
      Bin b;
      b.stock = symbols[s];
      b.day = dates[d];
      b.bin = static_cast<int>(t);
      b.missing = p.missing;
      if (!p.missing) {
        std::int64_t buy = 0;
        std::int64_t sell = 0;
        for (const auto& tr : p.prints) {
          if (tr.odd) continue;
          (tr.side > 0 ? buy : sell) += tr.size;
        }
        b.buy_vol = static_cast<double>(buy);
        b.sell_vol = static_cast<double>(sell);
        b.total_vol = static_cast<double>(buy + sell);
        b.imb = static_cast<double>(buy - sell);
        b.sign = buy >= sell ? 1 : -1;
        b.spread = 2.0 * p.half_spread;
      }
      layout.bins.push_back(std::move(b));
    }
  }
  const ProfileSet profiles = compute_profiles(layout);

  // Pass 2: price path, quotes and prints.
  std::vector<DayOutput> days(n_cells);
  parallel_for(n_cells, cfg.threads, [&](std::size_t cell) {
    const auto s = cell / static_cast<std::size_t>(cfg.n_days);
    const auto d = cell % static_cast<std::size_t>(cfg.n_days);
    Rng& rng = rngs[cell];
    const StockProfile& prof = profiles.stocks.at(symbols[s]);
    DayOutput& o = days[cell];
    double mid = on_grid(cfg.s0 * (1.0 + 0.1 * static_cast<double>(s)), g);
    const double rho = cfg.ac1;
    const double shrink = std::sqrt(1.0 - rho * rho);
    double eta = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double u = innovation(rng, cfg);
      eta = t == 0 ? u : rho * eta + shrink * u;
      const double xi = standard_normal(rng);
      Bin b = layout.bins[cell * n + t];
      PlantInfo plant{plans[cell][t].dominant, eta, xi};
      const BinPlan& p = plans[cell][t];
      if (p.missing) {
        o.bins.push_back(std::move(b));
        o.plants.push_back(plant);
        continue;
      }
      const double psi_bar = prof.avg_spread[t];
      const double v_bar = prof.avg_volume[t];
      const double mid1 = mid;
      const double mid2 = on_grid(mid1 + psi_bar * (cfg.alpha_bar * b.imb / v_bar + cfg.sigma_bar * eta), g);
      const double h = p.half_spread;
      const std::int64_t t0 = kOpenUs + static_cast<std::int64_t>(t) * kBinUs;
      const QuoteRecord q1{symbols[s], dates[d], t0 + kSecond, mid1 - h, mid1 + h, 500, 500};
      const QuoteRecord q2{symbols[s], dates[d], t0 + 294 * kSecond, mid2 - h, mid2 + h, 500, 500};

      double dom_price = 0.0;
      if (p.dominant) {
        const double nu_hat = std::max(b.buy_vol, b.sell_vol) / cfg.dt;
        dom_price = on_grid(mid1 + b.sign * psi_bar * (cfg.kappa_bar * nu_hat / v_bar + cfg.kappa_noise * xi), g);
      }
      // Prints: all but the last spread over (2s, 290s) against q1, the last at
      // 295s against q2.
      std::size_t last_round = 0;
      for (std::size_t i = 0; i < p.prints.size(); ++i) {
        if (!p.prints[i].odd) last_round = i;
      }
      double notional = 0.0;
      std::int64_t volume = 0;
      o.quotes.push_back(q1);
      const auto m = static_cast<std::int64_t>(p.prints.size());
      for (std::size_t i = 0; i < p.prints.size(); ++i) {
        const PlannedTrade& pt = p.prints[i];
        const bool last = i == last_round;
        const QuoteRecord& prevailing = last ? q2 : q1;
        if (last) o.quotes.push_back(q2);
        const std::int64_t when = last ? t0 + 295 * kSecond : t0 + 2 * kSecond + static_cast<std::int64_t>(i) * (288 * kSecond) / m;
        double price = pt.side > 0 ? prevailing.ask : prevailing.bid;
        if (p.dominant && !pt.odd) price = dom_price;
        o.trades.push_back(TradeRecord{symbols[s], dates[d], when, price, pt.size, pt.side});
        if (!pt.odd) {
          notional += price * static_cast<double>(pt.size);
          volume += pt.size;
        }
      }
      b.n_trades = 0;
      for (const auto& pt : p.prints) b.n_trades += pt.odd ? 0 : 1;
      b.n_quotes = 2;
      b.vwap = notional / static_cast<double>(volume);
      const double sp1 = q1.ask - q1.bid;
      const double sp2 = q2.ask - q2.bid;
      b.spread = (sp1 + sp2) / 2;
      b.s_start = 0.5 * (q1.bid + q1.ask);
      b.dS = 0.5 * (q2.bid + q2.ask) - b.s_start;
      mid = mid2;
      o.bins.push_back(std::move(b));
      o.plants.push_back(plant);
    }
  });

  for (auto& d : days) {
    for (auto& t : d.trades) out.trades.push_back(std::move(t));
    for (auto& q : d.quotes) out.quotes.push_back(std::move(q));
    for (auto& b : d.bins) out.truth.bins.push_back(std::move(b));
    for (auto& p : d.plants) out.plants.push_back(p);
  }
  out.truth.n_steps = cfg.n_steps;
  for (const auto& t : out.trades) {
    if (t.size < 100) ++out.truth.odd_lots_dropped;
  }
  fill_dominance(out.truth, compute_profiles(out.truth));
  return out;
}

void write_truth_csv(const GeneratedData& data, const std::filesystem::path& path) {
  std::string text =
      "stock,day,bin,missing,dS,imb,buy_vol,sell_vol,total_vol,vwap,spread,s_start,dominance,sign,n_trades,n_quotes,"
      "dominant,eta,xi\n";
  for (std::size_t i = 0; i < data.truth.bins.size(); ++i) {
    const Bin& b = data.truth.bins[i];
    const PlantInfo& p = data.plants[i];
    text += io::csv_row({b.stock, b.day, std::to_string(b.bin), b.missing ? "1" : "0", io::fmt(b.dS), io::fmt(b.imb),
                         io::fmt(b.buy_vol), io::fmt(b.sell_vol), io::fmt(b.total_vol), io::fmt(b.vwap),
                         io::fmt(b.spread), io::fmt(b.s_start), io::fmt(b.dominance), std::to_string(b.sign),
                         std::to_string(b.n_trades), std::to_string(b.n_quotes), p.dominant ? "1" : "0",
                         io::fmt(p.eta), io::fmt(p.xi)});
  }
  io::write_text(path, text);
}

std::vector<std::vector<double>> replay_paths(const BinSeries& bins, std::vector<std::string>* log) {
  std::vector<std::vector<double>> out;
  const auto n = static_cast<std::size_t>(bins.n_steps);
  for (std::size_t start = 0; start + n <= bins.bins.size(); start += n) {
    std::vector<double> path;
    bool complete = true;
    for (std::size_t t = 0; t < n; ++t) {
      const Bin& b = bins.bins[start + t];
      if (b.bin != static_cast<int>(t)) throw DataError("replay export: bins are not grouped by day");
      if (!b.usable()) complete = false;
      path.push_back(b.dS);
    }
    if (!complete) {
      if (log) log->push_back("replay export: skipped " + bins.bins[start].stock + " " + bins.bins[start].day +
                              " (missing bins)");
      continue;
    }
    out.push_back(std::move(path));
  }
  return out;
}

std::vector<std::vector<double>> export_replay(const BinSeries& bins, const std::filesystem::path& path,
                                               std::vector<std::string>* log) {
  auto paths = replay_paths(bins, log);
  save_replay(paths, path);
  return paths;
}

namespace {

// Returns per-day sequences of (possibly normalized) returns; missing bins
// break a sequence.
std::vector<std::vector<double>> return_runs(const BinSeries& bins, bool normalize) {
  const ProfileSet profiles = compute_profiles(bins);
  std::vector<std::vector<double>> runs;
  std::vector<double> run;
  const Bin* prev = nullptr;
  for (const Bin& b : bins.bins) {
    const bool continues = prev && prev->stock == b.stock && prev->day == b.day && prev->bin + 1 == b.bin;
    if (!continues || !b.usable()) {
      if (run.size()) runs.push_back(std::move(run));
      run.clear();
    }
    if (b.usable()) {
      const double scale = normalize ? profiles.stocks.at(b.stock).avg_spread[static_cast<std::size_t>(b.bin)] : 1.0;
      run.push_back(b.dS / scale);
    }
    prev = &b;
  }
  if (run.size()) runs.push_back(std::move(run));
  return runs;
}

}  // namespace

double lag1_autocorrelation(const BinSeries& bins, bool normalize) {
  const auto runs = return_runs(bins, normalize);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : runs) {
    for (double x : r) sum += x;
    count += r.size();
  }
  if (count < 3) throw DataError("autocorrelation needs at least 3 returns");
  const double mean = sum / static_cast<double>(count);
  double num = 0.0;
  double den = 0.0;
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      den += (r[i] - mean) * (r[i] - mean);
      if (i + 1 < r.size()) num += (r[i] - mean) * (r[i + 1] - mean);
    }
  }
  return num / den;
}

double excess_kurtosis(const BinSeries& bins, bool normalize) {
  const auto runs = return_runs(bins, normalize);
  std::vector<double> all;
  for (const auto& r : runs) all.insert(all.end(), r.begin(), r.end());
  if (all.size() < 4) throw DataError("kurtosis needs at least 4 returns");
  const double mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
  double m2 = 0.0;
  double m4 = 0.0;
  for (double x : all) {
    const double d2 = (x - mean) * (x - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= static_cast<double>(all.size());
  m4 /= static_cast<double>(all.size());
  return m4 / (m2 * m2) - 3.0;
}

}  // namespace execlab
