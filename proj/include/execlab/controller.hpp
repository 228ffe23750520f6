#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "execlab/autodiff.hpp"
#include "execlab/dynamics.hpp"
#include "execlab/rng.hpp"

namespace execlab {

/// Input scaling. Time enters as t / t_scale (normalised time, t_scale = T),
/// inventory as q / q_scale, preferences as A / a_scale and phi / phi_scale.
struct Normalizer {
  double t_scale = 77.0;
  double q_scale = 1.0;
  double a_scale = 0.01;
  double phi_scale = 0.007;

  void validate() const;
};

enum class Mode { train, eval };

/// Dense tanh network [d_in, 5, 5, 5, 1] with inverted dropout after every
/// hidden layer. Parameters are stored flat, layer by layer, each layer as
/// its row-major weight matrix followed by its biases.
class Mlp {
 public:
  static constexpr int kHiddenWidth = 5;
  static constexpr int kHiddenLayers = 3;
  static constexpr int kFormatVersion = 1;

  explicit Mlp(int d_in = 2, double dropout_rate = 0.2);

  int d_in() const { return d_in_; }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  std::size_t param_count() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  /// Offsets of layer l's weights and biases in params().
  std::size_t weight_offset(int layer) const { return weight_offsets_[static_cast<std::size_t>(layer)]; }
  std::size_t bias_offset(int layer) const { return bias_offsets_[static_cast<std::size_t>(layer)]; }

  double dropout_rate = 0.2;
  Mode mode = Mode::eval;
  Normalizer normalizer;

 private:
  int d_in_;
  std::vector<int> sizes_;
  std::vector<std::size_t> weight_offsets_;
  std::vector<std::size_t> bias_offsets_;
  std::vector<double> params_;
};

/// Glorot-uniform weights, zero biases.
Mlp init_mlp(Rng& rng, int d_in, const Normalizer& normalizer = {}, double dropout_rate = 0.2);

/// Normalised feature vector of length d_in for one decision.
std::vector<double> features(const Mlp& net, const ControlQuery& query);

/// Plain forward pass. Train mode draws one keep/drop decision per hidden
/// unit from `rng` (required) in layer-then-unit order.
double forward(const Mlp& net, std::span<const double> inputs, Rng* rng = nullptr);

/// Records the network's parameters on `tape` as leaves (in params() order).
std::vector<ad::Var> param_leaves(ad::Tape& tape, const Mlp& net);

/// Taped forward pass; `params` must come from param_leaves().
ad::Var forward(const Mlp& net, std::span<const ad::Var> params, std::span<const ad::Var> inputs, Rng* rng);

/// Eval-mode controller adapter (a private copy of the network is captured).
ControlFn as_controller(const Mlp& net);

void save_mlp(const Mlp& net, const std::filesystem::path& path);
std::string mlp_to_json(const Mlp& net);
/// Throws ConfigError on version mismatch or, when `expected_d_in` is given,
/// on an input-dimension mismatch.
Mlp load_mlp(const std::filesystem::path& path, std::optional<int> expected_d_in = std::nullopt);
Mlp mlp_from_json(const std::string& text, std::optional<int> expected_d_in = std::nullopt);

namespace detail {

inline double zero_like(double) { return 0.0; }
inline ad::Var zero_like(ad::Var v) { return v.tape()->zero(); }

// Shared dense forward over double or ad::Var parameters and inputs.
template <class T>
T mlp_forward(const Mlp& net, std::span<const T> params, std::span<const T> inputs, Rng* rng) {
  using std::tanh;
  using ad::tanh;
  const auto& sizes = net.layer_sizes();
  const bool train = net.mode == Mode::train;
  const double keep = 1.0 - net.dropout_rate;
  const double inv_keep = keep > 0.0 ? 1.0 / keep : 0.0;

  // Widest layer is max(d_in, 5) <= 8.
  std::array<T, 8> current{};
  std::array<T, 8> next{};
  std::copy(inputs.begin(), inputs.end(), current.begin());
  const int n_layers = static_cast<int>(sizes.size()) - 1;
  for (int l = 0; l < n_layers; ++l) {
    const auto n_in = static_cast<std::size_t>(sizes[static_cast<std::size_t>(l)]);
    const auto n_out = static_cast<std::size_t>(sizes[static_cast<std::size_t>(l) + 1]);
    const std::size_t w0 = net.weight_offset(l);
    const std::size_t b0 = net.bias_offset(l);
    const bool hidden = l + 1 < n_layers;
    for (std::size_t i = 0; i < n_out; ++i) {
      T acc = params[w0 + i * n_in] * current[0];
      for (std::size_t j = 1; j < n_in; ++j) acc = acc + params[w0 + i * n_in + j] * current[j];
      acc = acc + params[b0 + i];
      if (hidden) {
        acc = tanh(acc);
        if (train && net.dropout_rate > 0.0) {
          acc = uniform01(*rng) < keep ? acc * inv_keep : zero_like(acc);
        }
      }
      next[i] = acc;
    }
    std::swap(current, next);
  }
  return current[0];
}

}  // namespace detail

}  // namespace execlab
