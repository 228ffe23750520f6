#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "execlab/controller.hpp"
#include "execlab/errors.hpp"
#include "execlab/io.hpp"
#include "execlab/train.hpp"

namespace fs = std::filesystem;
using namespace execlab;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "execlab_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(EXECLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path dir(const std::string& name) {
  const fs::path p = kRoot / name;
  fs::remove_all(p);
  return p;
}

std::string out(const fs::path& p) { return "--out-dir " + p.string(); }

nlohmann::json manifest(const fs::path& d) { return nlohmann::json::parse(io::read_text(d / "run_manifest.json")); }

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  io::write_text(p, text);
  return p;
}

double column_value(const io::CsvTable& t, std::size_t row, const std::string& col) {
  return io::parse_double(t.rows[row][t.column(col)], col);
}

}  // namespace

TEST_CASE("solve writes the inclusive time grid and a reproducible hash") {
  const auto a = dir("solve_a"), b = dir("solve_b");
  REQUIRE(run(out(a) + " solve") == 0);
  REQUIRE(run(out(b) + " solve") == 0);
  const auto table = io::read_csv(a / "h_curves.csv");
  CHECK(table.rows.size() == 78);
  CHECK(table.header == std::vector<std::string>{"t", "h0", "h1", "h2"});
  CHECK(manifest(a)["output_hash"] == manifest(b)["output_hash"]);
  CHECK(manifest(a)["subcommand"] == "solve");
  CHECK(manifest(a)["config"]["preferences"]["A"] == 0.01);
  CHECK_FALSE(fs::exists(a / "FAILED"));
}

TEST_CASE("stationary-root preferences give a constant h2 column") {
  const double phi = 0.0049;
  const double A = (0.01 + 2.0 * std::sqrt(phi)) / 2.0;
  const auto cfg = write_config("stationary.json", "{\"preferences\": {\"A\": " + io::fmt(A) + ", \"phi\": " + io::fmt(phi) + "}}");
  const auto d = dir("stationary");
  REQUIRE(run("--config " + cfg.string() + " " + out(d) + " solve") == 0);
  const auto table = io::read_csv(d / "h_curves.csv");
  const double last = column_value(table, table.rows.size() - 1, "h2");
  for (std::size_t r = 0; r < table.rows.size(); ++r) CHECK(std::fabs(column_value(table, r, "h2") - last) <= 1e-12);
}

TEST_CASE("exit codes and failure marker") {
  const auto d = dir("missing");
  CHECK(run(out(d) + " estimate-impact --trades " + (kRoot / "nope.csv").string() + " --quotes " +
            (kRoot / "nope2.csv").string()) == 2);
  CHECK(fs::exists(d / "FAILED"));
  CHECK_FALSE(fs::exists(d / "run_manifest.json"));

  const auto unknown = write_config("unknown.json", "{\"prefs\": {\"A\": 1}}");
  CHECK(run("--config " + unknown.string() + " " + out(dir("unknown")) + " solve") == 2);
  CHECK(run(out(dir("nosub"))) == 2);
  CHECK(run(out(dir("badflag")) + " solve --bogus") == 2);

  // permanent impact far above the penalties: the Riccati solution has a pole
  const auto pole = write_config("pole.json", "{\"market\": {\"alpha\": 0.5}, \"preferences\": {\"phi\": 0.001}}");
  const auto p = dir("pole");
  CHECK(run("--config " + pole.string() + " " + out(p) + " solve") == 3);
  CHECK(fs::exists(p / "FAILED"));

  // a later success clears the marker
  CHECK(run(out(d) + " solve") == 0);
  CHECK_FALSE(fs::exists(d / "FAILED"));
}

TEST_CASE("config comes from EXECLAB_CONFIG when --config is absent; flags win") {
  const auto cfg = write_config("env.json", "{\"seed\": 9, \"preferences\": {\"A\": 0.02}}");
  const auto d = dir("env");
  setenv("EXECLAB_CONFIG", cfg.string().c_str(), 1);
  const int rc = run(out(d) + " --seed 4 solve");
  unsetenv("EXECLAB_CONFIG");
  REQUIRE(rc == 0);
  const auto m = manifest(d);
  CHECK(m["config"]["preferences"]["A"] == 0.02);
  CHECK(m["seed"] == 4);
}

TEST_CASE("train: multi mode, transfer init and deterministic outputs") {
  const auto a = dir("train_a"), b = dir("train_b");
  REQUIRE(run(out(a) + " train --iterations 20") == 0);
  REQUIRE(run(out(b) + " train --iterations 20") == 0);
  CHECK(manifest(a)["output_hash"] == manifest(b)["output_hash"]);
  CHECK(load_mlp(a / "weights.json").d_in() == 2);

  const auto m = dir("train_multi");
  REQUIRE(run(out(m) + " train --mode multi --iterations 5") == 0);
  CHECK(load_mlp(m / "weights.json").d_in() == 4);

  const auto t = dir("train_init");
  REQUIRE(run(out(t) + " train --iterations 5 --init " + (a / "weights.json").string()) == 0);
  const auto fresh = io::read_csv(a / "train_log.csv");
  const auto warm = io::read_csv(t / "train_log.csv");
  CHECK(column_value(warm, 0, "val_reward") > column_value(fresh, 0, "val_reward"));
}

TEST_CASE("a killed training run leaves a loadable checkpoint to resume from") {
  const auto cfg = write_config("ckpt.json", "{\"train\": {\"checkpoint_every\": 2}}");
  const auto d = dir("killed");
  const std::string cmd = "timeout -s KILL 3 " + std::string(EXECLAB_CLI_PATH) + " --config " + cfg.string() + " " +
                          out(d) + " train --iterations 100000 >/dev/null 2>&1";
  std::system(cmd.c_str());
  REQUIRE(fs::exists(d / "checkpoint.json"));
  const Checkpoint ck = load_checkpoint(d / "checkpoint.json");
  CHECK(ck.iteration > 0);
  CHECK(ck.iteration % 2 == 0);
  const auto r = dir("resumed");
  CHECK(run("--config " + cfg.string() + " " + out(r) + " train --iterations " + std::to_string(ck.iteration + 2) +
            " --resume " + (d / "checkpoint.json").string()) == 0);
  CHECK(load_checkpoint(r / "checkpoint.json").iteration == ck.iteration + 2);
}

TEST_CASE("project: closed-form self test and column ranges") {
  const auto d = dir("project_cf");
  REQUIRE(run(out(d) + " project --closed-form") == 0);
  const auto table = io::read_csv(d / "projection.csv");
  CHECK(table.rows.size() == 77);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const double r2 = column_value(table, r, "r2");
    CHECK(r2 >= 0.0);
    CHECK(r2 <= 1.0);
  }
  const auto summary = nlohmann::json::parse(io::read_text(d / "projection_summary.json"));
  CHECK(std::fabs(summary["min_r2"].get<double>() - 1.0) <= 1e-12);
  CHECK(summary["self_test"]["max_abs_h2_diff"].get<double>() <= 1e-8);
  CHECK(run(out(dir("project_none")) + " project") == 2);
}

TEST_CASE("heatmap matrix is monotone in both penalties") {
  const auto d = dir("heatmap");
  REQUIRE(run(out(d) + " heatmap") == 0);
  const auto t = io::read_csv(d / "heatmap.csv");
  // rows: A descending; columns: phi descending
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 1; j < t.header.size(); ++j) {
      const double v = io::parse_double(t.rows[i][j], "cell");
      if (i + 1 < t.rows.size()) CHECK(v <= io::parse_double(t.rows[i + 1][j], "cell"));
      if (j + 1 < t.header.size()) CHECK(v <= io::parse_double(t.rows[i][j + 1], "cell"));
    }
}

TEST_CASE("compare reports mean reward and wealth with confidence intervals") {
  const auto cfg = write_config("compare.json", "{\"compare\": {\"n_paths\": 2000}}");
  const auto d = dir("compare");
  REQUIRE(run("--config " + cfg.string() + " " + out(d) + " compare") == 0);
  const auto t = io::read_csv(d / "compare.csv");
  REQUIRE(t.rows.size() == 2);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(column_value(t, r, "reward_ci_lo") <= column_value(t, r, "mean_reward"));
    CHECK(column_value(t, r, "mean_reward") <= column_value(t, r, "reward_ci_hi"));
    CHECK(column_value(t, r, "mtm_ci_lo") <= column_value(t, r, "mean_mtm"));
  }
  // the optimal control beats doing nothing
  CHECK(column_value(t, 0, "mean_reward") > column_value(t, 1, "reward_ci_hi"));
}

TEST_CASE("simulate with a control file replays the exact states") {
  const auto a = dir("sim_a"), b = dir("sim_b");
  REQUIRE(run(out(a) + " simulate") == 0);
  REQUIRE(run(out(b) + " simulate --nu-file " + (a / "paths.csv").string()) == 0);
  CHECK(io::read_text(a / "paths.csv") == io::read_text(b / "paths.csv"));
  CHECK(io::read_text(a / "rewards.csv") == io::read_text(b / "rewards.csv"));
}

TEST_CASE("planted data through the CLI: alpha within 10 percent and attrition reported") {
  const auto g = dir("gen");
  REQUIRE(run(out(g) + " gen-data") == 0);
  const auto e = dir("estimate");
  REQUIRE(run(out(e) + " estimate-impact --trades " + (g / "trades.csv").string() + " --quotes " +
              (g / "quotes.csv").string()) == 0);
  const auto j = nlohmann::json::parse(io::read_text(e / "estimates.json"));
  CHECK(std::fabs(j["alpha_bar"]["coefficient"].get<double>() - 0.16) <= 0.016);
  CHECK(j["kappa_bar"]["attrition"].contains("after_dominance"));
  CHECK(j["kappa_bar"]["attrition"].contains("after_imbalance"));
  const auto m = manifest(e);
  CHECK(m["inputs"].size() == 2);
}
