#pragma once

// Policy training by backpropagation through the unrolled trajectory. Each
// iteration rolls out batch_size * tile_size paths on per-path tapes, takes
// loss = -mean reward and applies one Adam step.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "execlab/autodiff.hpp"
#include "execlab/controller.hpp"
#include "execlab/dynamics.hpp"
#include "execlab/params.hpp"

namespace execlab {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

enum class PreferenceMode { mono, multi };

/// Log-uniform sampling box for multi-preference training.
struct PreferenceDomain {
  double a_min = 1e-4;
  double a_max = 0.01;
  double phi_min = 7e-5;
  double phi_max = 0.007;

  void validate() const;
};

struct TrainConfig {
  double learning_rate = 5e-4;
  int batch_size = 64;
  int tile_size = 3;
  int total_iterations = 20000;
  int validation_every = 100;
  int validation_paths = 512;
  AdamConfig adam;
  PreferenceMode mode = PreferenceMode::mono;
  Preferences prefs;  ///< mono-mode preferences; gamma is used in both modes
  PreferenceDomain domain;
  double q0_min = -1.0;
  double q0_max = -0.1;
  double s0 = 10.0;
  double dropout_rate = 0.2;
  std::uint64_t seed = 1;
  int threads = 1;
  int checkpoint_every = 0;  ///< 0 disables periodic checkpoints
  std::filesystem::path checkpoint_path;

  void validate() const;
};

/// Additive price noise per bin: Gaussian sigma sqrt(dt) eps, or recorded
/// per-bin price increments replayed from a file.
class NoiseSource {
 public:
  enum class Kind { gaussian, replay };

  static NoiseSource gaussian();
  static NoiseSource replay(std::vector<std::vector<double>> increments);
  /// CSV with header path_id,step,dS; every path must cover steps 0..n_steps-1.
  static NoiseSource load_replay(const std::filesystem::path& path, int n_steps);

  Kind kind() const { return kind_; }
  std::size_t size() const { return increments_.size(); }
  const std::vector<double>& path(std::size_t i) const { return increments_.at(i); }
  void validate(const MarketParams& mp) const;

 private:
  Kind kind_ = Kind::gaussian;
  std::vector<std::vector<double>> increments_;
};

void save_replay(const std::vector<std::vector<double>>& increments, const std::filesystem::path& path);

struct Sample {
  std::size_t noise_index = 0;  ///< index into Minibatch::shocks
  double q0 = -1.0;
  double s0 = 10.0;
  double A = 0.01;
  double phi = 0.007;
};

struct Minibatch {
  std::vector<std::vector<double>> shocks;  ///< batch_size additive price-noise paths
  std::vector<Sample> samples;              ///< batch_size * tile_size, tile members adjacent
  std::vector<std::string> notes;           ///< e.g. replay wrap-around events
};

/// Iteration `iteration` of a run seeded with cfg.seed. Depends only on
/// (cfg, noise, iteration), so a resumed run draws the same batches.
Minibatch sample_minibatch(const TrainConfig& cfg, const MarketParams& mp, const NoiseSource& noise,
                           std::int64_t iteration);

/// Counts forward passes by mode; lets tests assert that training runs in
/// train mode and validation in eval mode.
struct Instrumentation {
  std::int64_t train_mode_forwards = 0;
  std::int64_t eval_mode_forwards = 0;
  std::int64_t validation_forwards_in_train_mode = 0;
  std::int64_t training_forwards_in_eval_mode = 0;
};

/// Reward of one trajectory under `net` with parameters `params`, recorded
/// on `tape` (cleared first). Dropout masks come from `dropout_rng`.
ad::Var taped_reward(ad::Tape& tape, const Mlp& net, std::span<const double> params, const Sample& sample,
                     std::span<const double> shocks, const MarketParams& mp, double gamma, Rng* dropout_rng,
                     std::vector<ad::Var>& leaves);

/// Same computation in plain doubles (identical operation order and masks).
double plain_reward(const Mlp& net, std::span<const double> params, const Sample& sample,
                    std::span<const double> shocks, const MarketParams& mp, double gamma, Rng* dropout_rng);

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  ///< d loss / d params
};

/// Mean of -reward over the minibatch with its gradient. Dropout masks for
/// sample j come from substream (mask_seed, j).
LossResult loss_and_grad(const Minibatch& batch, const Mlp& net, const MarketParams& mp, double gamma,
                         std::uint64_t mask_seed, int threads = 1, Instrumentation* counters = nullptr);

/// Bias-corrected Adam step in place.
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                 const AdamConfig& cfg = {});

struct LogEntry {
  std::int64_t iteration = 0;
  double train_loss = 0.0;              ///< NaN on the pre-training row
  std::optional<double> val_reward;     ///< present on validation iterations
};

struct Checkpoint {
  Mlp net;
  AdamState adam;
  std::int64_t iteration = 0;  ///< completed SGD steps
  std::uint64_t seed = 0;
};

std::string checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Frozen validation set, fixed by cfg.seed and independent of the batches.
struct ValidationSet {
  std::vector<std::vector<double>> shocks;
  std::vector<Sample> samples;
};
ValidationSet make_validation_set(const TrainConfig& cfg, const MarketParams& mp, const NoiseSource& noise,
                                  int n_paths);
/// Eval-mode mean reward of `net` over the set.
double validation_reward(const Mlp& net, const ValidationSet& set, const MarketParams& mp, double gamma,
                         int threads = 1, Instrumentation* counters = nullptr);
/// Mean reward of an arbitrary controller over the same set.
double validation_reward(const ControlFn& controller, const ValidationSet& set, const MarketParams& mp,
                         double gamma);

struct TrainResult {
  Mlp net;
  Mlp best_net;  ///< weights with the highest validation reward seen
  double best_val_reward = 0.0;
  AdamState adam;
  std::int64_t iterations_done = 0;
  std::vector<LogEntry> log;
  std::vector<std::string> notes;
  Instrumentation counters;
};

using ProgressFn = std::function<void(const LogEntry&)>;

/// Trains from `init` (or a fresh Glorot network when absent). With `resume`
/// the run continues from the checkpoint's iteration and Adam state.
TrainResult train(const TrainConfig& cfg, const MarketParams& mp, const NoiseSource& noise,
                  const std::optional<Mlp>& init = std::nullopt, const std::optional<Checkpoint>& resume = std::nullopt,
                  const ProgressFn& progress = {});

void write_train_log(const std::vector<LogEntry>& log, const std::filesystem::path& path);

}  // namespace execlab
