#include "execlab/train.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <type_traits>

#include <json.hpp>

#include "execlab/errors.hpp"
#include "execlab/io.hpp"
#include "execlab/parallel.hpp"
#include "execlab/rng.hpp"

namespace execlab {

using nlohmann::json;

namespace {

// Substream tags keep batch, mask, validation and init draws independent.
constexpr std::uint64_t kBatchStream = 0x6261746368ULL;
constexpr std::uint64_t kMaskStream = 0x6d61736bULL;
constexpr std::uint64_t kValidationStream = 0x76616c6964ULL;
constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kReplayStream = 0x7265706c6179ULL;

double noise_scale(const MarketParams& mp) { return mp.sigma * std::sqrt(mp.dt); }

double log_uniform(Rng& rng, double lo, double hi) {
  const double u = uniform01(rng);
  return std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)));
}

// Fisher-Yates with our own uniform draws so the order does not depend on
// the standard library's shuffle.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_rng(derive_seed(seed, kReplayStream), epoch);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
  }
  return perm;
}

std::vector<double> gaussian_shocks(Rng& rng, const MarketParams& mp) {
  const double scale = noise_scale(mp);
  std::vector<double> out(static_cast<std::size_t>(mp.n_steps));
  for (double& s : out) s = scale * standard_normal(rng);
  return out;
}

Sample draw_sample(Rng& rng, const TrainConfig& cfg, std::size_t noise_index) {
  Sample s;
  s.noise_index = noise_index;
  s.s0 = cfg.s0;
  s.q0 = cfg.q0_min + (cfg.q0_max - cfg.q0_min) * uniform01(rng);
  if (cfg.mode == PreferenceMode::multi) {
    s.A = log_uniform(rng, cfg.domain.a_min, cfg.domain.a_max);
    s.phi = log_uniform(rng, cfg.domain.phi_min, cfg.domain.phi_max);
  } else {
    s.A = cfg.prefs.A;
    s.phi = cfg.prefs.phi;
  }
  return s;
}

template <class T>
T make_const(double v, ad::Tape* tape) {
  if constexpr (std::is_same_v<T, ad::Var>) {
    return tape->constant(v);
  } else {
    return v;
  }
}

// Unrolled closed-loop rollout; T = double or ad::Var.
template <class T>
T run_policy(const Mlp& net, std::span<const T> params, const Sample& s, std::span<const double> shocks,
             const MarketParams& mp, double gamma, Rng* rng, ad::Tape* tape) {
  using ad::abs_pow;
  const Normalizer& nz = net.normalizer;
  const double inv_t = 1.0 / nz.t_scale;
  const double inv_q = 1.0 / nz.q_scale;
  detail::PathVars<T> p{make_const<T>(s.s0, tape), make_const<T>(s.q0, tape), make_const<T>(0.0, tape)};
  T running = abs_pow(p.Q, gamma);
  std::array<T, 4> x{};
  const auto d_in = static_cast<std::size_t>(net.d_in());
  if (d_in == 4) {
    x[2] = make_const<T>(s.A * (1.0 / nz.a_scale), tape);
    x[3] = make_const<T>(s.phi * (1.0 / nz.phi_scale), tape);
  }
  for (int t = 0; t < mp.n_steps; ++t) {
    x[0] = make_const<T>((t * mp.dt) * inv_t, tape);
    x[1] = p.Q * inv_q;
    const T nu = detail::mlp_forward<T>(net, params, std::span<const T>(x.data(), d_in), rng);
    detail::advance(p, nu, shocks[static_cast<std::size_t>(t)], mp.alpha_at(t), mp.kappa_at(t), mp.dt);
    running = running + abs_pow(p.Q, gamma);
  }
  return detail::terminal_reward(p, running, Preferences{s.A, s.phi, gamma});
}

void check_net_mode(const Mlp& net, Rng* rng) {
  if (net.mode == Mode::train && net.dropout_rate > 0.0 && rng == nullptr) {
    throw ConfigError("train-mode rollout needs a random generator for dropout");
  }
}

void count_forwards(Instrumentation* c, const Mlp& net, int n_steps, bool validation) {
  if (c == nullptr) return;
  if (net.mode == Mode::train) {
    c->train_mode_forwards += n_steps;
    if (validation) c->validation_forwards_in_train_mode += n_steps;
  } else {
    c->eval_mode_forwards += n_steps;
    if (!validation) c->training_forwards_in_eval_mode += n_steps;
  }
}

}  // namespace

void PreferenceDomain::validate() const {
  if (!(a_min > 0.0 && a_min <= a_max) || !(phi_min > 0.0 && phi_min <= phi_max)) {
    throw ConfigError("preference domain needs 0 < min <= max for A and phi");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1 || tile_size < 1) throw ConfigError("batch_size and tile_size must be >= 1");
  if (total_iterations < 0) throw ConfigError("total_iterations must be >= 0");
  if (validation_every < 1) throw ConfigError("validation_every must be >= 1");
  if (validation_paths < 1) throw ConfigError("validation_paths must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw ConfigError("adam: need 0 <= beta < 1 and eps > 0");
  }
  if (!(q0_min <= q0_max) || !std::isfinite(q0_min) || !std::isfinite(q0_max) || (q0_min == 0.0 && q0_max == 0.0)) {
    throw ConfigError("q0 range must be a finite interval [q0_min, q0_max] not reduced to 0");
  }
  if (!std::isfinite(s0)) throw ConfigError("s0 must be finite");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (prefs.gamma <= 1.0) throw ConfigError("gamma must be > 1");
  if (mode == PreferenceMode::mono) {
    prefs.validate();
  } else {
    domain.validate();
  }
}

NoiseSource NoiseSource::gaussian() { return NoiseSource{}; }

NoiseSource NoiseSource::replay(std::vector<std::vector<double>> increments) {
  NoiseSource n;
  n.kind_ = Kind::replay;
  n.increments_ = std::move(increments);
  if (n.increments_.empty()) throw ConfigError("replay noise: no paths");
  return n;
}

NoiseSource NoiseSource::load_replay(const std::filesystem::path& path, int n_steps) {
  const io::CsvTable table = io::read_csv(path);
  const std::size_t c_path = table.column("path_id");
  const std::size_t c_step = table.column("step");
  const std::size_t c_ds = table.column("dS");
  std::map<std::int64_t, std::vector<double>> paths;
  std::map<std::int64_t, std::vector<bool>> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path.string() + ":" + std::to_string(table.line_numbers[r]);
    if (row.size() != table.header.size()) throw DataError(where + ": wrong field count");
    const std::int64_t id = io::parse_int(row[c_path], "path_id");
    const std::int64_t step = io::parse_int(row[c_step], "step");
    if (step < 0 || step >= n_steps) throw DataError(where + ": step outside [0, n_steps)");
    auto& v = paths[id];
    auto& s = seen[id];
    if (v.empty()) {
      v.assign(static_cast<std::size_t>(n_steps), 0.0);
      s.assign(static_cast<std::size_t>(n_steps), false);
    }
    if (s[static_cast<std::size_t>(step)]) throw DataError(where + ": duplicate step");
    s[static_cast<std::size_t>(step)] = true;
    v[static_cast<std::size_t>(step)] = io::parse_double(row[c_ds], "dS");
  }
  std::vector<std::vector<double>> out;
  for (auto& [id, v] : paths) {
    for (bool b : seen[id]) {
      if (!b) throw DataError(path.string() + ": replay path " + std::to_string(id) + " is incomplete");
    }
    out.push_back(std::move(v));
  }
  return replay(std::move(out));
}

void NoiseSource::validate(const MarketParams& mp) const {
  if (kind_ == Kind::gaussian) {
    if (!(mp.sigma >= 0.0)) throw ConfigError("gaussian noise requires sigma >= 0");
    return;
  }
  for (const auto& p : increments_) {
    if (static_cast<int>(p.size()) != mp.n_steps) throw ConfigError("replay noise path length differs from n_steps");
    for (double v : p) {
      if (!std::isfinite(v)) throw ConfigError("replay noise contains a non-finite increment");
    }
  }
}

void save_replay(const std::vector<std::vector<double>>& increments, const std::filesystem::path& path) {
  std::string text = "path_id,step,dS\n";
  for (std::size_t i = 0; i < increments.size(); ++i) {
    for (std::size_t t = 0; t < increments[i].size(); ++t) {
      text += io::csv_row({std::to_string(i), std::to_string(t), io::fmt(increments[i][t])});
    }
  }
  io::write_text(path, text);
}

Minibatch sample_minibatch(const TrainConfig& cfg, const MarketParams& mp, const NoiseSource& noise,
                           std::int64_t iteration) {
  Minibatch batch;
  Rng rng = make_rng(derive_seed(cfg.seed, kBatchStream), static_cast<std::uint64_t>(iteration));
  const auto b = static_cast<std::size_t>(cfg.batch_size);
  batch.shocks.reserve(b);
  if (noise.kind() == NoiseSource::Kind::gaussian) {
    for (std::size_t i = 0; i < b; ++i) batch.shocks.push_back(gaussian_shocks(rng, mp));
  } else {
    const std::size_t n = noise.size();
    std::uint64_t cached_epoch = std::numeric_limits<std::uint64_t>::max();
    std::vector<std::size_t> perm;
    for (std::size_t i = 0; i < b; ++i) {
      const std::uint64_t pos = static_cast<std::uint64_t>(iteration) * b + i;
      const std::uint64_t epoch = pos / n;
      if (epoch != cached_epoch) {
        perm = permutation(n, cfg.seed, epoch);
        cached_epoch = epoch;
      }
      if (pos % n == 0 && epoch > 0) {
        batch.notes.push_back("replay noise exhausted after " + std::to_string(epoch) +
                              " pass(es); reshuffled and wrapped around at iteration " + std::to_string(iteration));
      }
      batch.shocks.push_back(noise.path(perm[pos % n]));
    }
  }
  for (std::size_t i = 0; i < b; ++i) {
    for (int k = 0; k < cfg.tile_size; ++k) batch.samples.push_back(draw_sample(rng, cfg, i));
  }
  return batch;
}

ad::Var taped_reward(ad::Tape& tape, const Mlp& net, std::span<const double> params, const Sample& sample,
                     std::span<const double> shocks, const MarketParams& mp, double gamma, Rng* dropout_rng,
                     std::vector<ad::Var>& leaves) {
  check_net_mode(net, dropout_rng);
  if (params.size() != net.param_count()) throw ConfigError("taped_reward: parameter count mismatch");
  if (shocks.size() != static_cast<std::size_t>(mp.n_steps)) throw ConfigError("taped_reward: noise length mismatch");
  tape.clear();
  leaves.clear();
  for (double w : params) leaves.push_back(tape.leaf(w));
  return run_policy<ad::Var>(net, leaves, sample, shocks, mp, gamma, dropout_rng, &tape);
}

double plain_reward(const Mlp& net, std::span<const double> params, const Sample& sample,
                    std::span<const double> shocks, const MarketParams& mp, double gamma, Rng* dropout_rng) {
  check_net_mode(net, dropout_rng);
  if (params.size() != net.param_count()) throw ConfigError("plain_reward: parameter count mismatch");
  if (shocks.size() != static_cast<std::size_t>(mp.n_steps)) throw ConfigError("plain_reward: noise length mismatch");
  return run_policy<double>(net, params, sample, shocks, mp, gamma, dropout_rng, nullptr);
}

LossResult loss_and_grad(const Minibatch& batch, const Mlp& net, const MarketParams& mp, double gamma,
                         std::uint64_t mask_seed, int threads, Instrumentation* counters) {
  const std::size_t n = batch.samples.size();
  if (n == 0) throw ConfigError("loss: empty minibatch");
  const std::size_t n_params = net.param_count();
  std::vector<double> rewards(n, 0.0);
  std::vector<double> grads(n * n_params, 0.0);

  parallel_for(n, threads, [&](std::size_t j) {
    thread_local ad::Tape tape;
    thread_local std::vector<ad::Var> leaves;
    thread_local std::vector<double> adjoint;
    const Sample& s = batch.samples[j];
    Rng rng = make_rng(mask_seed, j);
    ad::Var r;
    try {
      r = taped_reward(tape, net, net.params(), s, batch.shocks.at(s.noise_index), mp, gamma, &rng, leaves);
    } catch (const NumericError& e) {
      throw NumericError("loss: non-finite value on path " + std::to_string(j) + ": " + e.what());
    }
    tape.backward(r, adjoint);
    rewards[j] = r.value();
    for (std::size_t k = 0; k < n_params; ++k) {
      grads[j * n_params + k] = adjoint[static_cast<std::size_t>(leaves[k].index())];
    }
  });
  if (counters != nullptr) {
    for (std::size_t j = 0; j < n; ++j) count_forwards(counters, net, mp.n_steps, false);
  }

  // Index-ordered accumulation keeps the result independent of threading.
  LossResult out;
  out.grad.assign(n_params, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(rewards[j])) throw NumericError("loss: non-finite reward on path " + std::to_string(j));
    total += rewards[j];
    for (std::size_t k = 0; k < n_params; ++k) out.grad[k] += grads[j * n_params + k];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss = -total * inv_n;
  for (std::size_t k = 0; k < n_params; ++k) {
    out.grad[k] = -out.grad[k] * inv_n;
    if (!std::isfinite(out.grad[k])) throw NumericError("loss: non-finite gradient for parameter " + std::to_string(k));
  }
  return out;
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                 const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw ConfigError("adam: gradient size does not match parameters");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ConfigError("adam: moment size does not match parameters");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

std::string checkpoint_to_json(const Checkpoint& ck) {
  json j;
  j["format"] = "execlab-checkpoint";
  j["version"] = 1;
  j["iteration"] = ck.iteration;
  j["seed"] = ck.seed;
  j["network"] = json::parse(mlp_to_json(ck.net));
  j["adam"] = {{"step", ck.adam.step}, {"m", ck.adam.m}, {"v", ck.adam.v}};
  return j.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", std::string()) != "execlab-checkpoint" || j.at("version").get<int>() != 1) {
      throw ConfigError("checkpoint: unknown format or version");
    }
    Checkpoint ck{mlp_from_json(j.at("network").dump()), {}, j.at("iteration").get<std::int64_t>(),
                  j.at("seed").get<std::uint64_t>()};
    ck.adam.step = j.at("adam").at("step").get<std::int64_t>();
    ck.adam.m = j.at("adam").at("m").get<std::vector<double>>();
    ck.adam.v = j.at("adam").at("v").get<std::vector<double>>();
    if (!ck.adam.m.empty() && (ck.adam.m.size() != ck.net.param_count() || ck.adam.v.size() != ck.net.param_count())) {
      throw ConfigError("checkpoint: Adam moments do not match the network");
    }
    return ck;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  // Write then rename so an interrupted run never leaves a torn checkpoint.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  io::write_text(tmp, checkpoint_to_json(ck));
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(io::read_text(path)); }

ValidationSet make_validation_set(const TrainConfig& cfg, const MarketParams& mp, const NoiseSource& noise,
                                  int n_paths) {
  if (n_paths < 1) throw ConfigError("validation set needs at least one path");
  ValidationSet set;
  Rng rng = make_rng(derive_seed(cfg.seed, kValidationStream), 0);
  const auto n = static_cast<std::size_t>(n_paths);
  if (noise.kind() == NoiseSource::Kind::gaussian) {
    for (std::size_t i = 0; i < n; ++i) set.shocks.push_back(gaussian_shocks(rng, mp));
  } else {
    const auto perm = permutation(noise.size(), derive_seed(cfg.seed, kValidationStream), 0);
    for (std::size_t i = 0; i < n; ++i) set.shocks.push_back(noise.path(perm[i % perm.size()]));
  }
  for (std::size_t i = 0; i < n; ++i) set.samples.push_back(draw_sample(rng, cfg, i));
  return set;
}

double validation_reward(const Mlp& net, const ValidationSet& set, const MarketParams& mp, double gamma, int threads,
                         Instrumentation* counters) {
  Mlp eval = net;
  eval.mode = Mode::eval;
  const std::size_t n = set.samples.size();
  std::vector<double> rewards(n, 0.0);
  parallel_for(n, threads, [&](std::size_t i) {
    const Sample& s = set.samples[i];
    rewards[i] = plain_reward(eval, eval.params(), s, set.shocks.at(s.noise_index), mp, gamma, nullptr);
  });
  if (counters != nullptr) {
    for (std::size_t i = 0; i < n; ++i) count_forwards(counters, eval, mp.n_steps, true);
  }
  double total = 0.0;
  for (double r : rewards) total += r;
  return total / static_cast<double>(n);
}

double validation_reward(const ControlFn& controller, const ValidationSet& set, const MarketParams& mp, double gamma) {
  double total = 0.0;
  for (const Sample& s : set.samples) {
    const Preferences pref{s.A, s.phi, gamma};
    const Trajectory traj =
        simulate_path_with_increments(controller, mp, pref, s.s0, s.q0, set.shocks.at(s.noise_index));
    total += reward(traj, pref);
  }
  return total / static_cast<double>(set.samples.size());
}

TrainResult train(const TrainConfig& cfg, const MarketParams& mp, const NoiseSource& noise,
                  const std::optional<Mlp>& init, const std::optional<Checkpoint>& resume,
                  const ProgressFn& progress) {
  cfg.validate();
  mp.validate();
  noise.validate(mp);
  const int d_in = cfg.mode == PreferenceMode::multi ? 4 : 2;
  const double gamma = cfg.prefs.gamma;

  TrainResult res{Mlp(d_in, cfg.dropout_rate), Mlp(d_in, cfg.dropout_rate), 0.0, {}, 0, {}, {}, {}};
  std::int64_t start = 0;
  if (resume) {
    if (resume->net.d_in() != d_in) {
      throw ConfigError("checkpoint network has d_in = " + std::to_string(resume->net.d_in()) + ", mode needs " +
                        std::to_string(d_in));
    }
    res.net = resume->net;
    res.adam = resume->adam;
    start = resume->iteration;
  } else if (init) {
    if (init->d_in() != d_in) {
      throw ConfigError("initial network has d_in = " + std::to_string(init->d_in()) + ", mode needs " +
                        std::to_string(d_in));
    }
    res.net = *init;
  } else {
    Normalizer nz;
    nz.t_scale = mp.horizon();
    nz.q_scale = std::max(std::fabs(cfg.q0_min), std::fabs(cfg.q0_max));
    nz.a_scale = cfg.domain.a_max;
    nz.phi_scale = cfg.domain.phi_max;
    Rng rng = make_rng(derive_seed(cfg.seed, kInitStream), 0);
    res.net = init_mlp(rng, d_in, nz, cfg.dropout_rate);
  }
  res.net.dropout_rate = cfg.dropout_rate;
  res.net.mode = Mode::train;

  const ValidationSet val = make_validation_set(cfg, mp, noise, cfg.validation_paths);
  auto validate_now = [&]() { return validation_reward(res.net, val, mp, gamma, cfg.threads, &res.counters); };
  auto snapshot = [&](std::int64_t done) { return Checkpoint{res.net, res.adam, done, cfg.seed}; };

  res.best_net = res.net;
  res.best_val_reward = validate_now();
  if (start == 0) {
    LogEntry e{0, std::numeric_limits<double>::quiet_NaN(), res.best_val_reward};
    res.log.push_back(e);
    if (progress) progress(e);
  }

  for (std::int64_t it = start; it < cfg.total_iterations; ++it) {
    Minibatch batch = sample_minibatch(cfg, mp, noise, it);
    for (auto& note : batch.notes) res.notes.push_back(std::move(note));
    LossResult lr;
    try {
      lr = loss_and_grad(batch, res.net, mp, gamma, derive_seed(derive_seed(cfg.seed, kMaskStream), it), cfg.threads,
                         &res.counters);
    } catch (const NumericError& e) {
      std::string msg = std::string("training aborted at iteration ") + std::to_string(it) + ": " + e.what();
      if (!cfg.checkpoint_path.empty()) {
        save_checkpoint(snapshot(it), cfg.checkpoint_path);
        msg += " (last good weights saved to " + cfg.checkpoint_path.string() + ")";
      }
      throw NumericError(msg);
    }
    adam_update(res.net.params(), lr.grad, res.adam, cfg.learning_rate, cfg.adam);
    const std::int64_t done = it + 1;
    LogEntry e{done, lr.loss, std::nullopt};
    if (done % cfg.validation_every == 0 || done == cfg.total_iterations) {
      e.val_reward = validate_now();
      if (*e.val_reward > res.best_val_reward) {
        res.best_val_reward = *e.val_reward;
        res.best_net = res.net;
      }
    }
    res.log.push_back(e);
    if (progress) progress(e);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() && done % cfg.checkpoint_every == 0) {
      save_checkpoint(snapshot(done), cfg.checkpoint_path);
    }
  }
  res.iterations_done = std::max<std::int64_t>(start, cfg.total_iterations);
  if (!cfg.checkpoint_path.empty()) save_checkpoint(snapshot(res.iterations_done), cfg.checkpoint_path);
  res.net.mode = Mode::eval;
  res.best_net.mode = Mode::eval;
  return res;
}

void write_train_log(const std::vector<LogEntry>& log, const std::filesystem::path& path) {
  std::string text = "iteration,loss,val_reward\n";
  for (const auto& e : log) {
    text += io::csv_row({io::fmt(e.iteration), std::isnan(e.train_loss) ? std::string() : io::fmt(e.train_loss),
                         e.val_reward ? io::fmt(*e.val_reward) : std::string()});
  }
  io::write_text(path, text);
}

}  // namespace execlab
