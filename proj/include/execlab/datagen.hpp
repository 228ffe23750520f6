#pragma once

// Synthetic trades and quotes with intraday seasonality, heavy-tailed
// AR(1) bin returns and planted impact coefficients:
//   dS = avg_spread (alpha_bar imb / avg_volume + sigma_bar eta)
// and, in dominant-trader bins, every print at
//   S_start + sign avg_spread (kappa_bar nu_hat / avg_volume + kappa_noise xi).
// Prices sit on a dyadic grid so binning the emitted records reproduces the
// ground-truth table exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "execlab/impact.hpp"

namespace execlab {

struct GenConfig {
  int n_stocks = 4;
  int n_days = 20;
  int n_steps = 77;
  std::vector<double> volume_profile;  ///< empty: U-shaped default
  std::vector<double> spread_profile;  ///< empty: decaying default
  double tail_dof = 4.0;
  bool gaussian = false;  ///< Gaussian innovations instead of Student-t
  double ac1 = -0.05;     ///< lag-1 autocorrelation of the return noise
  double alpha_bar = 0.16;
  double kappa_bar = 0.24;
  double sigma_bar = 0.5;     ///< return noise in units of average spread
  double kappa_noise = 0.05;  ///< VWAP premium noise in units of average spread
  double dominant_rate = 0.1;
  double missing_rate = 0.0;
  double odd_lot_rate = 0.1;  ///< chance per bin of one extra odd-lot print
  double base_volume = 20000.0;
  double base_spread = 0.02;
  double s0 = 20.0;
  double price_grid = 1.0 / 65536.0;  ///< 0 disables rounding
  double dt = 1.0;                    ///< bin length used for nu_hat
  std::string start_date = "2024-01-02";
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

/// Planted draws per bin, aligned with GeneratedData::truth.bins.
struct PlantInfo {
  bool dominant = false;
  double eta = 0.0;
  double xi = 0.0;
};

struct GeneratedData {
  std::vector<TradeRecord> trades;
  std::vector<QuoteRecord> quotes;
  BinSeries truth;
  std::vector<PlantInfo> plants;
  std::vector<double> volume_profile;
  std::vector<double> spread_profile;
};

/// Default profiles of length n (mean exactly 1 up to rounding).
std::vector<double> default_volume_profile(int n);
std::vector<double> default_spread_profile(int n);

GeneratedData generate(const GenConfig& cfg);

/// Truth table CSV: bins columns plus dominant,eta,xi.
void write_truth_csv(const GeneratedData& data, const std::filesystem::path& path);

/// Per-day dS sequences (stock-major, then day) for every complete day.
/// Days with a missing bin are skipped and noted in `log`.
std::vector<std::vector<double>> replay_paths(const BinSeries& bins, std::vector<std::string>* log = nullptr);

/// Writes replay_paths() in the training replay format (path_id,step,dS).
std::vector<std::vector<double>> export_replay(const BinSeries& bins, const std::filesystem::path& path,
                                               std::vector<std::string>* log = nullptr);

/// Lag-1 autocorrelation pooled over consecutive usable bins within each
/// (stock, day), of dS normalized by the bin's average spread when
/// `normalize` is set.
double lag1_autocorrelation(const BinSeries& bins, bool normalize);
/// Excess kurtosis of the same pooled returns.
double excess_kurtosis(const BinSeries& bins, bool normalize);

}  // namespace execlab
