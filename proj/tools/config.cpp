#include "config.hpp"

#include <fstream>

#include "execlab/errors.hpp"
#include "execlab/io.hpp"

namespace execlab::cli {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

namespace {

ojson market_json(const MarketParams& m) {
  ojson j{{"alpha", m.alpha}, {"kappa", m.kappa}, {"sigma", m.sigma}, {"dt", m.dt}, {"n_steps", m.n_steps}};
  if (m.seasonality)
    j["seasonality"] = {{"volume_profile", m.seasonality->volume_profile},
                        {"spread_profile", m.seasonality->spread_profile}};
  else
    j["seasonality"] = nullptr;
  return j;
}

ojson prefs_json(const Preferences& p) { return {{"A", p.A}, {"phi", p.phi}, {"gamma", p.gamma}}; }

ojson train_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"tile_size", t.tile_size},
          {"iterations", t.total_iterations},
          {"validation_every", t.validation_every},
          {"validation_paths", t.validation_paths},
          {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}},
          {"mode", t.mode == PreferenceMode::mono ? "mono" : "multi"},
          {"domain",
           {{"a_min", t.domain.a_min},
            {"a_max", t.domain.a_max},
            {"phi_min", t.domain.phi_min},
            {"phi_max", t.domain.phi_max}}},
          {"q0_min", t.q0_min},
          {"q0_max", t.q0_max},
          {"s0", t.s0},
          {"dropout_rate", t.dropout_rate},
          {"checkpoint_every", t.checkpoint_every}};
}

ojson harvest_json(const HarvestOptions& h) {
  return {{"n_paths", h.n_paths},     {"q0_min", h.q0_min},
          {"q0_max", h.q0_max},       {"s0", h.s0},
          {"degenerate_ratio", h.degenerate_ratio}, {"min_samples", h.min_samples}};
}

ojson gen_json(const GenConfig& g) {
  return {{"n_stocks", g.n_stocks},
          {"n_days", g.n_days},
          {"n_steps", g.n_steps},
          {"volume_profile", g.volume_profile},
          {"spread_profile", g.spread_profile},
          {"tail_dof", g.tail_dof},
          {"gaussian", g.gaussian},
          {"ac1", g.ac1},
          {"alpha_bar", g.alpha_bar},
          {"kappa_bar", g.kappa_bar},
          {"sigma_bar", g.sigma_bar},
          {"kappa_noise", g.kappa_noise},
          {"dominant_rate", g.dominant_rate},
          {"missing_rate", g.missing_rate},
          {"odd_lot_rate", g.odd_lot_rate},
          {"base_volume", g.base_volume},
          {"base_spread", g.base_spread},
          {"s0", g.s0},
          {"price_grid", g.price_grid},
          {"dt", g.dt},
          {"start_date", g.start_date}};
}

ojson impact_json(const ImpactConfig& c) {
  return {{"n_steps", c.bins.n_steps},
          {"session_open_us", c.bins.session_open_us},
          {"bin_us", c.bins.bin_us},
          {"min_lot", c.bins.min_lot},
          {"max_bad_rate", c.bins.max_bad_rate},
          {"d_lo", c.filter.d_lo},
          {"d_hi", c.filter.d_hi},
          {"keep_fraction", c.filter.keep_fraction},
          {"imbalance_first", c.filter.imbalance_first},
          {"dt", c.dt}};
}

// Every key in `patch` must exist in `base`, recursively; null defaults
// accept any value.
void check_keys(const ojson& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config: " + (where.empty() ? std::string("root") : where) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    const auto& b = base.at(key);
    if (b.is_object() && !value.is_null()) check_keys(b, value, path);
  }
}

template <class T>
void get(const ojson& j, const char* key, T& out, const std::string& section) {
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + section + "." + key + ": " + e.what());
  }
}

}  // namespace

ojson to_json(const Config& cfg) {
  return {{"seed", cfg.seed},
          {"threads", cfg.threads},
          {"market", market_json(cfg.market)},
          {"preferences", prefs_json(cfg.prefs)},
          {"train", train_json(cfg.train)},
          {"harvest", harvest_json(cfg.harvest)},
          {"heatmap",
           {{"a_grid", cfg.heatmap.a_grid},
            {"phi_grid", cfg.heatmap.phi_grid},
            {"q0", cfg.heatmap.q0},
            {"fraction", cfg.heatmap.fraction}}},
          {"compare", {{"n_paths", cfg.compare.n_paths}, {"q0", cfg.compare.q0}, {"s0", cfg.compare.s0}}},
          {"simulate", {{"n_paths", cfg.simulate.n_paths}, {"q0", cfg.simulate.q0}, {"s0", cfg.simulate.s0}}},
          {"gen", gen_json(cfg.gen)},
          {"impact", impact_json(cfg.impact)}};
}

Config apply_json(const Config& base, const json& patch) {
  const ojson defaults = to_json(base);
  check_keys(defaults, patch, "");
  ojson merged = defaults;
  merged.merge_patch(ojson::parse(patch.dump()));

  Config cfg = base;
  get(merged, "seed", cfg.seed, "root");
  get(merged, "threads", cfg.threads, "root");

  const auto& m = merged.at("market");
  get(m, "alpha", cfg.market.alpha, "market");
  get(m, "kappa", cfg.market.kappa, "market");
  get(m, "sigma", cfg.market.sigma, "market");
  get(m, "dt", cfg.market.dt, "market");
  get(m, "n_steps", cfg.market.n_steps, "market");
  if (m.contains("seasonality") && !m.at("seasonality").is_null()) {
    Seasonality s;
    get(m.at("seasonality"), "volume_profile", s.volume_profile, "market.seasonality");
    get(m.at("seasonality"), "spread_profile", s.spread_profile, "market.seasonality");
    cfg.market.seasonality = s;
  } else {
    cfg.market.seasonality.reset();
  }

  const auto& p = merged.at("preferences");
  get(p, "A", cfg.prefs.A, "preferences");
  get(p, "phi", cfg.prefs.phi, "preferences");
  get(p, "gamma", cfg.prefs.gamma, "preferences");

  const auto& t = merged.at("train");
  get(t, "learning_rate", cfg.train.learning_rate, "train");
  get(t, "batch_size", cfg.train.batch_size, "train");
  get(t, "tile_size", cfg.train.tile_size, "train");
  get(t, "iterations", cfg.train.total_iterations, "train");
  get(t, "validation_every", cfg.train.validation_every, "train");
  get(t, "validation_paths", cfg.train.validation_paths, "train");
  get(t.at("adam"), "beta1", cfg.train.adam.beta1, "train.adam");
  get(t.at("adam"), "beta2", cfg.train.adam.beta2, "train.adam");
  get(t.at("adam"), "eps", cfg.train.adam.eps, "train.adam");
  std::string mode;
  get(t, "mode", mode, "train");
  if (mode == "mono")
    cfg.train.mode = PreferenceMode::mono;
  else if (mode == "multi")
    cfg.train.mode = PreferenceMode::multi;
  else
    throw ConfigError("config: train.mode must be mono or multi");
  get(t.at("domain"), "a_min", cfg.train.domain.a_min, "train.domain");
  get(t.at("domain"), "a_max", cfg.train.domain.a_max, "train.domain");
  get(t.at("domain"), "phi_min", cfg.train.domain.phi_min, "train.domain");
  get(t.at("domain"), "phi_max", cfg.train.domain.phi_max, "train.domain");
  get(t, "q0_min", cfg.train.q0_min, "train");
  get(t, "q0_max", cfg.train.q0_max, "train");
  get(t, "s0", cfg.train.s0, "train");
  get(t, "dropout_rate", cfg.train.dropout_rate, "train");
  get(t, "checkpoint_every", cfg.train.checkpoint_every, "train");

  const auto& h = merged.at("harvest");
  get(h, "n_paths", cfg.harvest.n_paths, "harvest");
  get(h, "q0_min", cfg.harvest.q0_min, "harvest");
  get(h, "q0_max", cfg.harvest.q0_max, "harvest");
  get(h, "s0", cfg.harvest.s0, "harvest");
  get(h, "degenerate_ratio", cfg.harvest.degenerate_ratio, "harvest");
  get(h, "min_samples", cfg.harvest.min_samples, "harvest");

  const auto& hm = merged.at("heatmap");
  get(hm, "a_grid", cfg.heatmap.a_grid, "heatmap");
  get(hm, "phi_grid", cfg.heatmap.phi_grid, "heatmap");
  get(hm, "q0", cfg.heatmap.q0, "heatmap");
  get(hm, "fraction", cfg.heatmap.fraction, "heatmap");

  for (auto [name, dst] : {std::pair{"compare", &cfg.compare}, std::pair{"simulate", &cfg.simulate}}) {
    const auto& c = merged.at(name);
    get(c, "n_paths", dst->n_paths, name);
    get(c, "q0", dst->q0, name);
    get(c, "s0", dst->s0, name);
  }

  const auto& g = merged.at("gen");
  get(g, "n_stocks", cfg.gen.n_stocks, "gen");
  get(g, "n_days", cfg.gen.n_days, "gen");
  get(g, "n_steps", cfg.gen.n_steps, "gen");
  get(g, "volume_profile", cfg.gen.volume_profile, "gen");
  get(g, "spread_profile", cfg.gen.spread_profile, "gen");
  get(g, "tail_dof", cfg.gen.tail_dof, "gen");
  get(g, "gaussian", cfg.gen.gaussian, "gen");
  get(g, "ac1", cfg.gen.ac1, "gen");
  get(g, "alpha_bar", cfg.gen.alpha_bar, "gen");
  get(g, "kappa_bar", cfg.gen.kappa_bar, "gen");
  get(g, "sigma_bar", cfg.gen.sigma_bar, "gen");
  get(g, "kappa_noise", cfg.gen.kappa_noise, "gen");
  get(g, "dominant_rate", cfg.gen.dominant_rate, "gen");
  get(g, "missing_rate", cfg.gen.missing_rate, "gen");
  get(g, "odd_lot_rate", cfg.gen.odd_lot_rate, "gen");
  get(g, "base_volume", cfg.gen.base_volume, "gen");
  get(g, "base_spread", cfg.gen.base_spread, "gen");
  get(g, "s0", cfg.gen.s0, "gen");
  get(g, "price_grid", cfg.gen.price_grid, "gen");
  get(g, "dt", cfg.gen.dt, "gen");
  get(g, "start_date", cfg.gen.start_date, "gen");

  const auto& im = merged.at("impact");
  get(im, "n_steps", cfg.impact.bins.n_steps, "impact");
  get(im, "session_open_us", cfg.impact.bins.session_open_us, "impact");
  get(im, "bin_us", cfg.impact.bins.bin_us, "impact");
  get(im, "min_lot", cfg.impact.bins.min_lot, "impact");
  get(im, "max_bad_rate", cfg.impact.bins.max_bad_rate, "impact");
  get(im, "d_lo", cfg.impact.filter.d_lo, "impact");
  get(im, "d_hi", cfg.impact.filter.d_hi, "impact");
  get(im, "keep_fraction", cfg.impact.filter.keep_fraction, "impact");
  get(im, "imbalance_first", cfg.impact.filter.imbalance_first, "impact");
  get(im, "dt", cfg.impact.dt, "impact");
  return cfg;
}

Config load_config_file(const Config& base, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  json patch;
  try {
    patch = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return apply_json(base, patch);
}

void propagate_globals(Config& cfg) {
  if (cfg.threads < 1) throw ConfigError("--threads must be >= 1");
  cfg.train.seed = cfg.seed;
  cfg.train.threads = cfg.threads;
  cfg.harvest.seed = cfg.seed;
  cfg.harvest.threads = cfg.threads;
  cfg.gen.seed = cfg.seed;
  cfg.gen.threads = cfg.threads;
}

}  // namespace execlab::cli
