#pragma once

// Impact estimation from 5-minute binned trades and quotes.
//   permanent:  dS / avg_spread            = alpha_bar * imb / avg_volume
//   temporary:  sign (VWAP - S_start) / avg_spread = kappa_bar * nu_hat / avg_volume
// Both regressions are pooled across stocks, days and bins, without
// intercept. Per-stock parameters follow as (coef / dt) avg_spread / avg_volume.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace execlab {

struct TradeRecord {
  std::string symbol;
  std::string date;  ///< YYYY-MM-DD
  std::int64_t time_us = 0;  ///< microseconds since midnight
  double price = 0.0;
  std::int64_t size = 0;
  int side = 0;  ///< +1 buy, -1 sell, 0 unknown (inferred)
};

struct QuoteRecord {
  std::string symbol;
  std::string date;
  std::int64_t time_us = 0;
  double bid = 0.0;
  double ask = 0.0;
  std::int64_t bid_size = 0;
  std::int64_t ask_size = 0;
};

/// "YYYY-MM-DD HH:MM:SS[.ffffff]" <-> (date, microseconds since midnight).
std::string format_timestamp(const std::string& date, std::int64_t time_us);
void parse_timestamp(const std::string& text, std::string& date, std::int64_t& time_us);

/// Trade CSV: symbol,timestamp,price,size[,side] with side B/S or blank.
void write_trades_csv(const std::vector<TradeRecord>& trades, const std::filesystem::path& path);
/// Quote CSV: symbol,timestamp,bid,ask,bid_size,ask_size.
void write_quotes_csv(const std::vector<QuoteRecord>& quotes, const std::filesystem::path& path);

/// A record that failed to parse; `symbol`/`date`/`time_us` are set when
/// the key fields themselves were readable.
struct BadRecord {
  std::string file;
  std::size_t line = 0;
  std::string message;
  std::optional<std::string> symbol;
  std::optional<std::string> date;
  std::optional<std::int64_t> time_us;
};

template <class R>
struct ParsedRecords {
  std::vector<R> records;
  std::vector<BadRecord> bad;
};

ParsedRecords<TradeRecord> read_trades_csv(const std::filesystem::path& path);
ParsedRecords<QuoteRecord> read_quotes_csv(const std::filesystem::path& path);

struct Bin {
  std::string stock;
  std::string day;
  int bin = 0;
  bool missing = true;   ///< no usable trade in the bin
  bool suspect = false;  ///< bad-record rate above the configured limit
  double dS = 0.0;       ///< last kept mid minus first kept mid
  double imb = 0.0;      ///< buy volume minus sell volume
  double buy_vol = 0.0;
  double sell_vol = 0.0;
  double total_vol = 0.0;
  double vwap = 0.0;
  double spread = 0.0;   ///< mean ask - bid over kept quotes
  double s_start = 0.0;  ///< mid of the first kept quote
  double dominance = 0.0;
  int sign = 1;          ///< dominant side
  int n_trades = 0;
  int n_quotes = 0;

  bool usable() const { return !missing && !suspect; }
};

struct BinSeries {
  int n_steps = 77;
  std::vector<Bin> bins;  ///< sorted by (stock, day, bin); n_steps per (stock, day)
  std::vector<std::string> log;
  std::size_t odd_lots_dropped = 0;
  std::size_t out_of_session = 0;
  std::size_t unsigned_trades = 0;
  std::size_t bad_records = 0;
};

struct BinOptions {
  int n_steps = 77;
  std::int64_t session_open_us = 9LL * 3600 * 1000000 + 30LL * 60 * 1000000;  ///< 9:30
  std::int64_t bin_us = 5LL * 60 * 1000000;
  std::int64_t min_lot = 100;        ///< trades below this size are odd lots
  double max_bad_rate = 0.05;        ///< bad / (good + bad) above this marks the bin suspect
};

/// Per (stock, bin) averages over days where the bin has data.
struct StockProfile {
  std::vector<double> avg_spread;
  std::vector<double> avg_volume;
  std::vector<int> days;  ///< days contributing to each bin
};

struct ProfileSet {
  std::map<std::string, StockProfile> stocks;
  /// Fraction of (stock, day, bin) cells that contain data.
  double coverage = 0.0;
};

/// Trade side by the quote rule against the prevailing quote: at or above
/// the ask buys, at or below the bid sells, otherwise above/below the mid,
/// with a tick test against the previous trade price at the mid. 0 when
/// undetermined.
int infer_side(double price, const QuoteRecord* prevailing, std::optional<double> previous_price);

BinSeries binize(std::vector<TradeRecord> trades, std::vector<QuoteRecord> quotes, const BinOptions& opts = {},
                 const std::vector<BadRecord>& bad = {});

ProfileSet compute_profiles(const BinSeries& series);
/// Sets dominance = max(buy, sell) / avg_volume for every usable bin.
void fill_dominance(BinSeries& series, const ProfileSet& profiles);

struct RegressionStats {
  std::size_t n = 0;
  double coef = 0.0;
  double stderr_ = 0.0;
  double r2_uncentered = 0.0;
  double intercept_if_fitted = 0.0;  ///< diagnostic: intercept of the with-intercept fit
  double slope_if_intercept = 0.0;
};

struct ImpactEstimate {
  std::string kind;  ///< "alpha" or "kappa"
  RegressionStats stats;
  double dt = 1.0;
  std::map<std::string, std::vector<double>> per_stock;  ///< de-normalized per bin, NaN where no data
  std::map<std::string, std::size_t> attrition;
};

/// No-intercept regression y = coef x with standard error and diagnostics.
RegressionStats no_intercept_ols(const std::vector<double>& x, const std::vector<double>& y);

/// Regression rows are taken in (stock, day, bin) order whatever the order
/// of `series.bins`, so estimates do not depend on row order.
ImpactEstimate estimate_alpha(const BinSeries& series, const ProfileSet& profiles, double dt = 1.0);

struct KappaFilter {
  double d_lo = 2.0;
  double d_hi = 10.0;
  double keep_fraction = 0.6;  ///< keep the top share by |imb| (ties kept)
  bool imbalance_first = false;
};

ImpactEstimate estimate_kappa(const BinSeries& series, const ProfileSet& profiles, double dt = 1.0,
                              const KappaFilter& filter = {});

/// Indices kept by the |imb| percentile rule: the top ceil(keep * n) values,
/// extended to every value tied with the smallest kept one.
std::vector<std::size_t> top_by_magnitude(const std::vector<double>& values, double keep_fraction);

std::string estimates_to_json(const ImpactEstimate& alpha, const ImpactEstimate& kappa, const BinSeries& series,
                              const ProfileSet& profiles);
/// stock,bin,avg_spread,avg_volume,alpha,kappa
void write_parameter_grid_csv(const ImpactEstimate& alpha, const ImpactEstimate& kappa, const ProfileSet& profiles,
                              const std::filesystem::path& path);
/// One row per bin, all BinSeries fields.
void write_bins_csv(const BinSeries& series, const std::filesystem::path& path);

}  // namespace execlab
