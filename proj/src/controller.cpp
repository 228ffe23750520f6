#include "execlab/controller.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "execlab/errors.hpp"

namespace execlab {

using nlohmann::json;

void Normalizer::validate() const {
  if (!(t_scale > 0.0) || !(q_scale > 0.0) || !(a_scale > 0.0) || !(phi_scale > 0.0)) {
    throw ConfigError("normalizer scales must all be > 0");
  }
}

Mlp::Mlp(int d_in, double dropout) : dropout_rate(dropout), d_in_(d_in) {
  if (d_in != 2 && d_in != 4) throw ConfigError("Mlp: d_in must be 2 or 4 (got " + std::to_string(d_in) + ")");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("Mlp: dropout rate must be in [0, 1)");
  sizes_ = {d_in, kHiddenWidth, kHiddenWidth, kHiddenWidth, 1};
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weight_offsets_.push_back(offset);
    offset += static_cast<std::size_t>(sizes_[l] * sizes_[l + 1]);
    bias_offsets_.push_back(offset);
    offset += static_cast<std::size_t>(sizes_[l + 1]);
  }
  params_.assign(offset, 0.0);
}

Mlp init_mlp(Rng& rng, int d_in, const Normalizer& normalizer, double dropout_rate) {
  normalizer.validate();
  Mlp net(d_in, dropout_rate);
  net.normalizer = normalizer;
  const auto& sizes = net.layer_sizes();
  auto p = net.params();
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    const std::size_t w0 = net.weight_offset(static_cast<int>(l));
    for (std::size_t k = 0; k < static_cast<std::size_t>(fan_in * fan_out); ++k) {
      p[w0 + k] = limit * (2.0 * uniform01(rng) - 1.0);
    }
  }
  return net;
}

std::vector<double> features(const Mlp& net, const ControlQuery& query) {
  const Normalizer& n = net.normalizer;
  // Multiplication by reciprocals matches the taped training path bit-for-bit.
  std::vector<double> x{query.t * (1.0 / n.t_scale), query.q * (1.0 / n.q_scale)};
  if (net.d_in() == 4) {
    x.push_back(query.A * (1.0 / n.a_scale));
    x.push_back(query.phi * (1.0 / n.phi_scale));
  }
  return x;
}

double forward(const Mlp& net, std::span<const double> inputs, Rng* rng) {
  if (static_cast<int>(inputs.size()) != net.d_in()) {
    throw ConfigError("Mlp forward: expected " + std::to_string(net.d_in()) + " inputs, got " +
                      std::to_string(inputs.size()));
  }
  if (net.mode == Mode::train && net.dropout_rate > 0.0 && rng == nullptr) {
    throw ConfigError("Mlp forward: train mode needs a random generator for dropout");
  }
  return detail::mlp_forward<double>(net, net.params(), inputs, rng);
}

std::vector<ad::Var> param_leaves(ad::Tape& tape, const Mlp& net) {
  std::vector<ad::Var> leaves;
  leaves.reserve(net.param_count());
  for (double w : net.params()) leaves.push_back(tape.leaf(w));
  return leaves;
}

ad::Var forward(const Mlp& net, std::span<const ad::Var> params, std::span<const ad::Var> inputs, Rng* rng) {
  if (static_cast<int>(inputs.size()) != net.d_in()) {
    throw ConfigError("Mlp forward: expected " + std::to_string(net.d_in()) + " inputs, got " +
                      std::to_string(inputs.size()));
  }
  if (params.size() != net.param_count()) throw ConfigError("Mlp forward: parameter count mismatch");
  if (net.mode == Mode::train && net.dropout_rate > 0.0 && rng == nullptr) {
    throw ConfigError("Mlp forward: train mode needs a random generator for dropout");
  }
  return detail::mlp_forward<ad::Var>(net, params, inputs, rng);
}

ControlFn as_controller(const Mlp& net) {
  Mlp copy = net;
  copy.mode = Mode::eval;
  return [copy](const ControlQuery& query) {
    const auto x = features(copy, query);
    return detail::mlp_forward<double>(copy, copy.params(), x, nullptr);
  };
}

std::string mlp_to_json(const Mlp& net) {
  json j;
  j["format"] = "execlab-mlp";
  j["version"] = Mlp::kFormatVersion;
  j["d_in"] = net.d_in();
  j["layer_sizes"] = net.layer_sizes();
  j["activation"] = "tanh";
  j["dropout_rate"] = net.dropout_rate;
  j["time_input"] = "normalized";
  j["normalizer"] = {{"t_scale", net.normalizer.t_scale},
                     {"q_scale", net.normalizer.q_scale},
                     {"a_scale", net.normalizer.a_scale},
                     {"phi_scale", net.normalizer.phi_scale}};
  json layers = json::array();
  const auto& sizes = net.layer_sizes();
  const auto p = net.params();
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto n_in = static_cast<std::size_t>(sizes[l]);
    const auto n_out = static_cast<std::size_t>(sizes[l + 1]);
    json weights = json::array();
    for (std::size_t i = 0; i < n_out; ++i) {
      const std::size_t row = net.weight_offset(static_cast<int>(l)) + i * n_in;
      weights.push_back(std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(row),
                                            p.begin() + static_cast<std::ptrdiff_t>(row + n_in)));
    }
    const std::size_t b0 = net.bias_offset(static_cast<int>(l));
    layers.push_back({{"weights", weights},
                      {"biases", std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(b0),
                                                     p.begin() + static_cast<std::ptrdiff_t>(b0 + n_out))}});
  }
  j["layers"] = layers;
  return j.dump(2) + "\n";
}

Mlp mlp_from_json(const std::string& text, std::optional<int> expected_d_in) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("weight file is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", std::string()) != "execlab-mlp") throw ConfigError("weight file: unknown format tag");
    const int version = j.at("version").get<int>();
    if (version != Mlp::kFormatVersion) {
      throw ConfigError("weight file: format version " + std::to_string(version) + " not supported (expected " +
                        std::to_string(Mlp::kFormatVersion) + ")");
    }
    const int d_in = j.at("d_in").get<int>();
    if (expected_d_in && *expected_d_in != d_in) {
      throw ConfigError("weight file has d_in = " + std::to_string(d_in) + " but a d_in = " +
                        std::to_string(*expected_d_in) + " network was requested");
    }
    if (j.value("time_input", std::string("normalized")) != "normalized") {
      throw ConfigError("weight file: unsupported time_input encoding");
    }
    Mlp net(d_in, j.at("dropout_rate").get<double>());
    if (j.at("layer_sizes").get<std::vector<int>>() != net.layer_sizes()) {
      throw ConfigError("weight file: layer sizes do not match the [d_in, 5, 5, 5, 1] architecture");
    }
    const json& nj = j.at("normalizer");
    net.normalizer = Normalizer{nj.at("t_scale").get<double>(), nj.at("q_scale").get<double>(),
                                nj.at("a_scale").get<double>(), nj.at("phi_scale").get<double>()};
    net.normalizer.validate();
    const auto& sizes = net.layer_sizes();
    const json& layers = j.at("layers");
    if (layers.size() != sizes.size() - 1) throw ConfigError("weight file: wrong number of layers");
    auto p = net.params();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const auto n_in = static_cast<std::size_t>(sizes[l]);
      const auto n_out = static_cast<std::size_t>(sizes[l + 1]);
      const auto weights = layers[l].at("weights").get<std::vector<std::vector<double>>>();
      const auto biases = layers[l].at("biases").get<std::vector<double>>();
      if (weights.size() != n_out || biases.size() != n_out) throw ConfigError("weight file: layer shape mismatch");
      for (std::size_t i = 0; i < n_out; ++i) {
        if (weights[i].size() != n_in) throw ConfigError("weight file: layer shape mismatch");
        for (std::size_t k = 0; k < n_in; ++k) p[net.weight_offset(static_cast<int>(l)) + i * n_in + k] = weights[i][k];
        p[net.bias_offset(static_cast<int>(l)) + i] = biases[i];
      }
    }
    for (double w : net.params()) {
      if (!std::isfinite(w)) throw ConfigError("weight file: non-finite parameter");
    }
    return net;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("weight file: ") + e.what());
  }
}

void save_mlp(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write weight file " + path.string());
  out << mlp_to_json(net);
  if (!out) throw ConfigError("failed writing weight file " + path.string());
}

Mlp load_mlp(const std::filesystem::path& path, std::optional<int> expected_d_in) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open weight file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return mlp_from_json(ss.str(), expected_d_in);
}

}  // namespace execlab
