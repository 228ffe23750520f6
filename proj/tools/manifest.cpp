#include "manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>

#include "execlab/errors.hpp"
#include "execlab/io.hpp"

#ifndef EXECLAB_VERSION
#define EXECLAB_VERSION "0.0.0"
#endif

namespace execlab::cli {

std::string sha1_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha1(), nullptr) != 1)
    throw Error("sha1: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string sha1_file(const std::filesystem::path& path) { return sha1_hex(io::read_text(path)); }

std::string output_hash(const std::filesystem::path& out_dir, const std::vector<std::filesystem::path>& outputs) {
  std::vector<std::string> lines;
  for (const auto& p : outputs) lines.push_back(p.lexically_relative(out_dir).generic_string() + " " + sha1_file(p));
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) all += l + "\n";
  return sha1_hex(all);
}

std::string write_manifest(const RunManifest& m, const std::filesystem::path& out_dir) {
  nlohmann::ordered_json j;
  j["subcommand"] = m.subcommand;
  j["version"] = EXECLAB_VERSION;
  j["seed"] = m.seed;
  j["threads"] = m.threads;
  j["config"] = m.config;
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& p : m.inputs) j["inputs"].push_back({{"path", p.string()}, {"sha1", sha1_file(p)}});
  j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& p : m.outputs)
    j["outputs"].push_back({{"path", p.lexically_relative(out_dir).generic_string()}, {"sha1", sha1_file(p)}});
  const std::string hash = output_hash(out_dir, m.outputs);
  j["output_hash"] = hash;
  j["notes"] = m.notes;
  j["wall_seconds"] = m.wall_seconds;
  io::write_text(out_dir / "run_manifest.json", j.dump(2) + "\n");
  return hash;
}

}  // namespace execlab::cli
