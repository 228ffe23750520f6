#pragma once

// Run configuration for the command-line tool. A JSON file overlays the
// defaults key by key; unknown keys are rejected so typos do not pass
// silently. The resolved configuration is what gets written to the manifest.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "execlab/datagen.hpp"
#include "execlab/explain.hpp"
#include "execlab/impact.hpp"
#include "execlab/params.hpp"
#include "execlab/train.hpp"

namespace execlab::cli {

struct HeatmapConfig {
  std::vector<double> a_grid{0.01, 0.001, 0.0001};
  std::vector<double> phi_grid{0.07, 0.007, 0.004, 0.001, 7e-4, 7e-5};
  double q0 = -1.0;
  double fraction = 0.9;
};

struct PathsConfig {
  int n_paths = 10000;
  double q0 = -1.0;
  double s0 = 10.0;
};

struct ImpactConfig {
  BinOptions bins;
  KappaFilter filter;
  double dt = 1.0;
};

struct Config {
  MarketParams market;
  Preferences prefs;
  TrainConfig train;
  HarvestOptions harvest;
  HeatmapConfig heatmap;
  PathsConfig compare;
  PathsConfig simulate{100, -1.0, 10.0};
  GenConfig gen;
  ImpactConfig impact;
  std::uint64_t seed = 1;
  int threads = 1;
};

nlohmann::ordered_json to_json(const Config& cfg);
/// Overlays `patch` on `base`; throws ConfigError on unknown keys or bad types.
Config apply_json(const Config& base, const nlohmann::json& patch);
Config load_config_file(const Config& base, const std::filesystem::path& path);

/// Copies the global seed and thread count into every section.
void propagate_globals(Config& cfg);

}  // namespace execlab::cli
