#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace execlab::cli {

std::string sha1_hex(const std::string& bytes);
std::string sha1_file(const std::filesystem::path& path);

struct RunManifest {
  std::string subcommand;
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;  ///< inside out_dir
  std::vector<std::string> notes;
  double wall_seconds = 0.0;
};

/// SHA-1 over "name sha1" lines of the outputs sorted by name; independent of
/// timing, so reruns with the same seed, config and inputs reproduce it.
std::string output_hash(const std::filesystem::path& out_dir, const std::vector<std::filesystem::path>& outputs);

/// Writes out_dir/run_manifest.json and returns the output hash.
std::string write_manifest(const RunManifest& m, const std::filesystem::path& out_dir);

}  // namespace execlab::cli
