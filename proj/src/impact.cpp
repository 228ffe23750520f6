#include "execlab/impact.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "execlab/errors.hpp"
#include "execlab/io.hpp"

namespace execlab {

using nlohmann::json;

std::string format_timestamp(const std::string& date, std::int64_t time_us) {
  if (time_us < 0) throw DataError("negative time of day");
  const std::int64_t secs = time_us / 1000000;
  const std::int64_t micro = time_us % 1000000;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s %02lld:%02lld:%02lld.%06lld", date.c_str(), static_cast<long long>(secs / 3600),
                static_cast<long long>((secs / 60) % 60), static_cast<long long>(secs % 60),
                static_cast<long long>(micro));
  return buf;
}

void parse_timestamp(const std::string& text, std::string& date, std::int64_t& time_us) {
  // YYYY-MM-DD HH:MM:SS[.f{1,6}]; a 'T' separator is also accepted.
  auto digits = [&](std::size_t pos, std::size_t n) {
    if (pos + n > text.size()) throw DataError("bad timestamp '" + text + "'");
    std::int64_t v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (text[i] < '0' || text[i] > '9') throw DataError("bad timestamp '" + text + "'");
      v = v * 10 + (text[i] - '0');
    }
    return v;
  };
  if (text.size() < 19 || text[4] != '-' || text[7] != '-' || (text[10] != ' ' && text[10] != 'T') ||
      text[13] != ':' || text[16] != ':') {
    throw DataError("bad timestamp '" + text + "'");
  }
  digits(0, 4);
  const std::int64_t month = digits(5, 2);
  const std::int64_t day = digits(8, 2);
  const std::int64_t h = digits(11, 2);
  const std::int64_t m = digits(14, 2);
  const std::int64_t s = digits(17, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31 || h > 23 || m > 59 || s > 60) {
    throw DataError("bad timestamp '" + text + "'");
  }
  std::int64_t micro = 0;
  if (text.size() > 19) {
    if (text[19] != '.' || text.size() == 20 || text.size() > 26) throw DataError("bad timestamp '" + text + "'");
    const std::size_t n = text.size() - 20;
    micro = digits(20, n);
    for (std::size_t i = n; i < 6; ++i) micro *= 10;
  }
  date = text.substr(0, 10);
  time_us = ((h * 60 + m) * 60 + s) * 1000000 + micro;
}

void write_trades_csv(const std::vector<TradeRecord>& trades, const std::filesystem::path& path) {
  std::string text = "symbol,timestamp,price,size,side\n";
  for (const auto& t : trades) {
    text += io::csv_row({t.symbol, format_timestamp(t.date, t.time_us), io::fmt(t.price), io::fmt(t.size),
                         t.side > 0 ? "B" : (t.side < 0 ? "S" : "")});
  }
  io::write_text(path, text);
}

void write_quotes_csv(const std::vector<QuoteRecord>& quotes, const std::filesystem::path& path) {
  std::string text = "symbol,timestamp,bid,ask,bid_size,ask_size\n";
  for (const auto& q : quotes) {
    text += io::csv_row({q.symbol, format_timestamp(q.date, q.time_us), io::fmt(q.bid), io::fmt(q.ask),
                         io::fmt(q.bid_size), io::fmt(q.ask_size)});
  }
  io::write_text(path, text);
}

namespace {

template <class R, class Fill>
ParsedRecords<R> read_records(const std::filesystem::path& path, const std::vector<std::string>& required, Fill fill) {
  const io::CsvTable table = io::read_csv(path);
  std::vector<std::size_t> cols;
  for (const auto& name : required) cols.push_back(table.column(name));
  ParsedRecords<R> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    BadRecord bad{path.string(), table.line_numbers[r], "", std::nullopt, std::nullopt, std::nullopt};
    try {
      if (row.size() != table.header.size()) throw DataError("wrong field count");
      bad.symbol = row[cols[0]];
      std::string date;
      std::int64_t time_us = 0;
      parse_timestamp(row[cols[1]], date, time_us);
      bad.date = date;
      bad.time_us = time_us;
      R rec;
      rec.symbol = row[cols[0]];
      rec.date = date;
      rec.time_us = time_us;
      if (rec.symbol.empty()) throw DataError("empty symbol");
      fill(rec, row, table);
      out.records.push_back(std::move(rec));
    } catch (const DataError& e) {
      bad.message = e.what();
      out.bad.push_back(std::move(bad));
    }
  }
  return out;
}

}  // namespace

ParsedRecords<TradeRecord> read_trades_csv(const std::filesystem::path& path) {
  return read_records<TradeRecord>(
      path, {"symbol", "timestamp", "price", "size"},
      [](TradeRecord& t, const std::vector<std::string>& row, const io::CsvTable& table) {
        t.price = io::parse_double(row[table.column("price")], "price");
        t.size = io::parse_int(row[table.column("size")], "size");
        if (!(t.price > 0.0) || !std::isfinite(t.price)) throw DataError("price must be positive");
        if (t.size <= 0) throw DataError("size must be positive");
        if (table.has_column("side")) {
          const std::string& s = row[table.column("side")];
          if (s == "B" || s == "b" || s == "1" || s == "+1") {
            t.side = 1;
          } else if (s == "S" || s == "s" || s == "-1") {
            t.side = -1;
          } else if (!s.empty()) {
            throw DataError("unknown side '" + s + "'");
          }
        }
      });
}

ParsedRecords<QuoteRecord> read_quotes_csv(const std::filesystem::path& path) {
  return read_records<QuoteRecord>(
      path, {"symbol", "timestamp", "bid", "ask", "bid_size", "ask_size"},
      [](QuoteRecord& q, const std::vector<std::string>& row, const io::CsvTable& table) {
        q.bid = io::parse_double(row[table.column("bid")], "bid");
        q.ask = io::parse_double(row[table.column("ask")], "ask");
        q.bid_size = io::parse_int(row[table.column("bid_size")], "bid_size");
        q.ask_size = io::parse_int(row[table.column("ask_size")], "ask_size");
        if (!(q.bid > 0.0) || !(q.ask >= q.bid) || !std::isfinite(q.ask)) throw DataError("crossed or invalid quote");
      });
}

int infer_side(double price, const QuoteRecord* prevailing, std::optional<double> previous_price) {
  if (prevailing != nullptr) {
    if (price >= prevailing->ask) return 1;
    if (price <= prevailing->bid) return -1;
    const double mid = 0.5 * (prevailing->bid + prevailing->ask);
    if (price > mid) return 1;
    if (price < mid) return -1;
  }
  if (previous_price) {
    if (price > *previous_price) return 1;
    if (price < *previous_price) return -1;
  }
  return 0;
}

namespace {

using DayKey = std::pair<std::string, std::string>;  // (symbol, date)

struct BinAccum {
  std::int64_t buy = 0;
  std::int64_t sell = 0;
  double notional = 0.0;
  std::int64_t volume = 0;
  int trades = 0;
  int seen = 0;  // in-session trade rows including odd lots and unsigned
  int bad = 0;
  std::int64_t last_quote = -1;
  double first_mid = 0.0;
  double last_mid = 0.0;
  double spread_sum = 0.0;
  int quotes = 0;
};

template <class R>
bool key_less(const R& a, const R& b) {
  return std::tie(a.symbol, a.date, a.time_us) < std::tie(b.symbol, b.date, b.time_us);
}

}  // namespace

BinSeries binize(std::vector<TradeRecord> trades, std::vector<QuoteRecord> quotes, const BinOptions& opts,
                 const std::vector<BadRecord>& bad) {
  if (opts.n_steps < 1 || opts.bin_us <= 0) throw ConfigError("binize: bad bin layout");
  std::stable_sort(trades.begin(), trades.end(), key_less<TradeRecord>);
  std::stable_sort(quotes.begin(), quotes.end(), key_less<QuoteRecord>);

  BinSeries out;
  out.n_steps = opts.n_steps;
  const auto n = static_cast<std::size_t>(opts.n_steps);
  std::map<DayKey, std::vector<BinAccum>> days;
  auto day_bins = [&](const std::string& sym, const std::string& date) -> std::vector<BinAccum>& {
    auto& v = days[{sym, date}];
    if (v.empty()) v.resize(n);
    return v;
  };
  auto bin_of = [&](std::int64_t time_us) -> std::optional<std::size_t> {
    if (time_us < opts.session_open_us) return std::nullopt;
    const std::int64_t k = (time_us - opts.session_open_us) / opts.bin_us;
    if (k >= opts.n_steps) return std::nullopt;
    return static_cast<std::size_t>(k);
  };

  for (const auto& b : bad) {
    out.log.push_back(b.file + ":" + std::to_string(b.line) + ": " + b.message);
    ++out.bad_records;
    if (b.symbol && b.date && b.time_us) {
      if (auto k = bin_of(*b.time_us)) day_bins(*b.symbol, *b.date)[*k].bad += 1;
    }
  }
  for (const auto& q : quotes) day_bins(q.symbol, q.date);

  std::size_t qi = 0;
  std::optional<double> prev_price;
  DayKey current;
  for (const auto& t : trades) {
    const DayKey key{t.symbol, t.date};
    if (key != current) {
      current = key;
      prev_price.reset();
      while (qi < quotes.size() && std::tie(quotes[qi].symbol, quotes[qi].date) < std::tie(t.symbol, t.date)) ++qi;
    }
    // Advance to the last quote at or before the trade in the same day.
    while (qi + 1 < quotes.size() && quotes[qi + 1].symbol == t.symbol && quotes[qi + 1].date == t.date &&
           quotes[qi + 1].time_us <= t.time_us) {
      ++qi;
    }
    const QuoteRecord* prevailing = nullptr;
    std::int64_t prevailing_index = -1;
    if (qi < quotes.size() && quotes[qi].symbol == t.symbol && quotes[qi].date == t.date &&
        quotes[qi].time_us <= t.time_us) {
      prevailing = &quotes[qi];
      prevailing_index = static_cast<std::int64_t>(qi);
    }
    auto& bins = day_bins(t.symbol, t.date);
    const auto k = bin_of(t.time_us);
    if (!k) {
      ++out.out_of_session;
      continue;
    }
    BinAccum& acc = bins[*k];
    acc.seen += 1;
    if (t.size < opts.min_lot) {
      ++out.odd_lots_dropped;
      continue;
    }
    const int side = t.side != 0 ? t.side : infer_side(t.price, prevailing, prev_price);
    prev_price = t.price;
    if (side == 0) {
      ++out.unsigned_trades;
      continue;
    }
    (side > 0 ? acc.buy : acc.sell) += t.size;
    acc.notional += t.price * static_cast<double>(t.size);
    acc.volume += t.size;
    acc.trades += 1;
    if (prevailing != nullptr && prevailing_index != acc.last_quote) {
      const double mid = 0.5 * (prevailing->bid + prevailing->ask);
      if (acc.quotes == 0) acc.first_mid = mid;
      acc.last_mid = mid;
      acc.spread_sum += prevailing->ask - prevailing->bid;
      acc.quotes += 1;
      acc.last_quote = prevailing_index;
    }
  }

  for (const auto& [key, bins] : days) {
    for (std::size_t k = 0; k < n; ++k) {
      const BinAccum& a = bins[k];
      Bin b;
      b.stock = key.first;
      b.day = key.second;
      b.bin = static_cast<int>(k);
      b.n_trades = a.trades;
      b.n_quotes = a.quotes;
      const int records = a.seen + a.bad;
      b.suspect = records > 0 && static_cast<double>(a.bad) / records > opts.max_bad_rate;
      b.missing = a.trades == 0 || a.quotes == 0;
      if (a.trades > 0 && a.quotes == 0) {
        out.log.push_back(key.first + " " + key.second + " bin " + std::to_string(k) +
                          ": trades without a preceding quote, bin treated as missing");
      }
      if (!b.missing) {
        b.buy_vol = static_cast<double>(a.buy);
        b.sell_vol = static_cast<double>(a.sell);
        b.total_vol = static_cast<double>(a.buy + a.sell);
        b.imb = static_cast<double>(a.buy - a.sell);
        b.vwap = a.notional / static_cast<double>(a.volume);
        b.spread = a.spread_sum / a.quotes;
        b.s_start = a.first_mid;
        b.dS = a.last_mid - a.first_mid;
        b.sign = a.buy >= a.sell ? 1 : -1;
      }
      out.bins.push_back(std::move(b));
    }
  }
  const ProfileSet profiles = compute_profiles(out);
  fill_dominance(out, profiles);
  return out;
}

ProfileSet compute_profiles(const BinSeries& series) {
  ProfileSet ps;
  const auto n = static_cast<std::size_t>(series.n_steps);
  std::size_t cells = 0;
  std::size_t with_data = 0;
  for (const Bin& b : series.bins) {
    if (b.bin < 0 || b.bin >= series.n_steps) throw DataError("bin index out of range");
    auto& p = ps.stocks[b.stock];
    if (p.avg_spread.empty()) {
      p.avg_spread.assign(n, 0.0);
      p.avg_volume.assign(n, 0.0);
      p.days.assign(n, 0);
    }
    ++cells;
    if (!b.usable()) continue;
    ++with_data;
    const auto k = static_cast<std::size_t>(b.bin);
    p.avg_spread[k] += b.spread;
    p.avg_volume[k] += b.total_vol;
    p.days[k] += 1;
  }
  for (auto& [stock, p] : ps.stocks) {
    for (std::size_t k = 0; k < n; ++k) {
      if (p.days[k] > 0) {
        p.avg_spread[k] /= p.days[k];
        p.avg_volume[k] /= p.days[k];
      } else {
        p.avg_spread[k] = std::numeric_limits<double>::quiet_NaN();
        p.avg_volume[k] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  ps.coverage = cells ? static_cast<double>(with_data) / static_cast<double>(cells) : 0.0;
  return ps;
}

void fill_dominance(BinSeries& series, const ProfileSet& profiles) {
  for (Bin& b : series.bins) {
    if (!b.usable()) continue;
    const double v = profiles.stocks.at(b.stock).avg_volume[static_cast<std::size_t>(b.bin)];
    b.dominance = v > 0.0 ? std::max(b.buy_vol, b.sell_vol) / v : 0.0;
  }
}

RegressionStats no_intercept_ols(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ConfigError("regression: x and y differ in length");
  RegressionStats st;
  st.n = x.size();
  if (st.n < 2) throw DataError("regression needs at least 2 points (got " + std::to_string(st.n) + ")");
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  if (!(sxx > 0.0)) throw DataError("regression: regressor is identically zero");
  st.coef = sxy / sxx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - st.coef * x[i];
    ssr += r * r;
  }
  st.stderr_ = std::sqrt(ssr / static_cast<double>(st.n - 1) / sxx);
  st.r2_uncentered = syy > 0.0 ? 1.0 - ssr / syy : 1.0;

  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(st.n);
  my /= static_cast<double>(st.n);
  double cxx = 0.0;
  double cxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cxx += (x[i] - mx) * (x[i] - mx);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  if (cxx > 0.0) {
    st.slope_if_intercept = cxy / cxx;
    st.intercept_if_fitted = my - st.slope_if_intercept * mx;
  }
  return st;
}

namespace {

std::vector<const Bin*> ordered_usable(const BinSeries& series) {
  std::vector<const Bin*> rows;
  for (const Bin& b : series.bins) {
    if (b.usable()) rows.push_back(&b);
  }
  std::sort(rows.begin(), rows.end(), [](const Bin* a, const Bin* b) {
    return std::tie(a->stock, a->day, a->bin) < std::tie(b->stock, b->day, b->bin);
  });
  return rows;
}

void denormalize(ImpactEstimate& est, const ProfileSet& profiles) {
  for (const auto& [stock, p] : profiles.stocks) {
    std::vector<double> grid(p.avg_spread.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      grid[k] = (est.stats.coef / est.dt) * p.avg_spread[k] / p.avg_volume[k];
    }
    est.per_stock[stock] = std::move(grid);
  }
}

const StockProfile& profile_of(const ProfileSet& profiles, const Bin& b) {
  auto it = profiles.stocks.find(b.stock);
  if (it == profiles.stocks.end()) throw DataError("no profile for stock " + b.stock);
  return it->second;
}

}  // namespace

ImpactEstimate estimate_alpha(const BinSeries& series, const ProfileSet& profiles, double dt) {
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  ImpactEstimate est;
  est.kind = "alpha";
  est.dt = dt;
  const auto rows = ordered_usable(series);
  std::vector<double> x;
  std::vector<double> y;
  for (const Bin* b : rows) {
    const StockProfile& p = profile_of(profiles, *b);
    const auto k = static_cast<std::size_t>(b->bin);
    x.push_back(b->imb / p.avg_volume[k]);
    y.push_back(b->dS / p.avg_spread[k]);
  }
  est.attrition["bins_total"] = series.bins.size();
  est.attrition["bins_usable"] = rows.size();
  est.stats = no_intercept_ols(x, y);
  denormalize(est, profiles);
  return est;
}

std::vector<std::size_t> top_by_magnitude(const std::vector<double>& values, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ConfigError("keep fraction must be in (0, 1]");
  if (values.empty()) return {};
  std::vector<double> mags;
  for (double v : values) mags.push_back(std::fabs(v));
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto k = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(values.size()) - 1e-12));
  const double threshold = sorted[std::max<std::size_t>(k, 1) - 1];
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < mags.size(); ++i) {
    if (mags[i] >= threshold) kept.push_back(i);
  }
  return kept;
}

ImpactEstimate estimate_kappa(const BinSeries& series, const ProfileSet& profiles, double dt,
                              const KappaFilter& filter) {
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(filter.d_lo < filter.d_hi)) throw ConfigError("dominance band must have d_lo < d_hi");
  ImpactEstimate est;
  est.kind = "kappa";
  est.dt = dt;
  std::vector<const Bin*> rows = ordered_usable(series);
  est.attrition["bins_total"] = series.bins.size();
  est.attrition["bins_usable"] = rows.size();

  auto dominance_pass = [&](const std::vector<const Bin*>& in) {
    std::vector<const Bin*> out;
    for (const Bin* b : in) {
      if (b->dominance > filter.d_lo && b->dominance < filter.d_hi) out.push_back(b);
    }
    return out;
  };
  auto imbalance_pass = [&](const std::vector<const Bin*>& in) {
    std::vector<double> imb;
    for (const Bin* b : in) imb.push_back(b->imb);
    std::vector<const Bin*> out;
    for (std::size_t i : top_by_magnitude(imb, filter.keep_fraction)) out.push_back(in[i]);
    return out;
  };
  if (filter.imbalance_first) {
    rows = imbalance_pass(rows);
    est.attrition["after_imbalance"] = rows.size();
    rows = dominance_pass(rows);
    est.attrition["after_dominance"] = rows.size();
  } else {
    rows = dominance_pass(rows);
    est.attrition["after_dominance"] = rows.size();
    rows = imbalance_pass(rows);
    est.attrition["after_imbalance"] = rows.size();
  }
  if (rows.size() < 2) {
    std::string msg = "kappa: too few bins survive the filters (";
    for (const auto& [k, v] : est.attrition) msg += k + "=" + std::to_string(v) + " ";
    msg.back() = ')';
    throw DataError(msg);
  }
  std::vector<double> x;
  std::vector<double> y;
  for (const Bin* b : rows) {
    const StockProfile& p = profile_of(profiles, *b);
    const auto k = static_cast<std::size_t>(b->bin);
    const double nu_hat = std::max(b->buy_vol, b->sell_vol) / dt;
    x.push_back(nu_hat / p.avg_volume[k]);
    y.push_back(b->sign * (b->vwap - b->s_start) / p.avg_spread[k]);
  }
  est.stats = no_intercept_ols(x, y);
  denormalize(est, profiles);
  return est;
}

namespace {

json stats_json(const ImpactEstimate& e) {
  json j;
  j["coefficient"] = e.stats.coef;
  j["stderr"] = e.stats.stderr_;
  j["n"] = e.stats.n;
  j["r2_uncentered"] = e.stats.r2_uncentered;
  j["diagnostic_intercept"] = e.stats.intercept_if_fitted;
  j["diagnostic_slope_with_intercept"] = e.stats.slope_if_intercept;
  j["dt"] = e.dt;
  j["attrition"] = e.attrition;
  return j;
}

}  // namespace

std::string estimates_to_json(const ImpactEstimate& alpha, const ImpactEstimate& kappa, const BinSeries& series,
                              const ProfileSet& profiles) {
  json j;
  j["alpha_bar"] = stats_json(alpha);
  j["kappa_bar"] = stats_json(kappa);
  j["bins"] = {{"total", series.bins.size()},
               {"coverage", profiles.coverage},
               {"odd_lots_dropped", series.odd_lots_dropped},
               {"out_of_session", series.out_of_session},
               {"unsigned_trades", series.unsigned_trades},
               {"bad_records", series.bad_records}};
  j["stocks"] = json::array();
  for (const auto& [stock, p] : profiles.stocks) j["stocks"].push_back(stock);
  j["log"] = series.log;
  return j.dump(2) + "\n";
}

void write_parameter_grid_csv(const ImpactEstimate& alpha, const ImpactEstimate& kappa, const ProfileSet& profiles,
                              const std::filesystem::path& path) {
  auto cell = [](double v) { return std::isnan(v) ? std::string() : io::fmt(v); };
  std::string text = "stock,bin,avg_spread,avg_volume,alpha,kappa\n";
  for (const auto& [stock, p] : profiles.stocks) {
    for (std::size_t k = 0; k < p.avg_spread.size(); ++k) {
      text += io::csv_row({stock, std::to_string(k), cell(p.avg_spread[k]), cell(p.avg_volume[k]),
                           cell(alpha.per_stock.at(stock)[k]), cell(kappa.per_stock.at(stock)[k])});
    }
  }
  io::write_text(path, text);
}

void write_bins_csv(const BinSeries& series, const std::filesystem::path& path) {
  std::string text =
      "stock,day,bin,missing,suspect,dS,imb,buy_vol,sell_vol,total_vol,vwap,spread,s_start,dominance,sign,n_trades,"
      "n_quotes\n";
  for (const Bin& b : series.bins) {
    text += io::csv_row({b.stock, b.day, std::to_string(b.bin), b.missing ? "1" : "0", b.suspect ? "1" : "0",
                         io::fmt(b.dS), io::fmt(b.imb), io::fmt(b.buy_vol), io::fmt(b.sell_vol), io::fmt(b.total_vol),
                         io::fmt(b.vwap), io::fmt(b.spread), io::fmt(b.s_start), io::fmt(b.dominance),
                         std::to_string(b.sign), std::to_string(b.n_trades), std::to_string(b.n_quotes)});
  }
  io::write_text(path, text);
}

}  // namespace execlab
