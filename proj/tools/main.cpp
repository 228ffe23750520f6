// execlab command-line tool. Every subcommand writes its outputs plus a
// run_manifest.json into --out-dir. Exit codes: 0 ok, 2 configuration or
// input problem, 3 numerical failure; a FAILED file marks partial output.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"
#include "execlab/closedform.hpp"
#include "execlab/controller.hpp"
#include "execlab/datagen.hpp"
#include "execlab/dynamics.hpp"
#include "execlab/errors.hpp"
#include "execlab/explain.hpp"
#include "execlab/impact.hpp"
#include "execlab/io.hpp"
#include "execlab/train.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace execlab;
using execlab::cli::Config;
using execlab::cli::RunManifest;

namespace {

struct Flags {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = ".";
  std::string config;

  // train
  std::string mode;
  std::string noise = "gaussian";
  std::string init;
  std::string resume;
  int iterations = 0;
  // project / heatmap / compare / simulate
  std::string weights;
  bool closed_form = false;
  std::vector<std::string> weight_list;
  std::string controller = "closed-form";
  std::string nu_file;
  // estimate-impact
  std::string trades;
  std::string quotes;
};

struct Context {
  Config cfg;
  Flags flags;
  fs::path out;
  RunManifest manifest;

  fs::path output(const std::string& name) {
    const fs::path p = out / name;
    manifest.outputs.push_back(p);
    return p;
  }
  fs::path input(const std::string& name) {
    const fs::path p(name);
    if (!fs::exists(p)) throw ConfigError("input file not found: " + name);
    manifest.inputs.push_back(p);
    return p;
  }
};

// Closed form for the configured (A, phi) at gamma = 2, the benchmark for
// every exponent.
ClosedFormSolution benchmark_solution(const Config& cfg) {
  return solve(cfg.market, Preferences{cfg.prefs.A, cfg.prefs.phi, 2.0});
}

ControlFn controller_by_name(Context& ctx, const std::string& spec) {
  if (spec == "closed-form") return as_controller(benchmark_solution(ctx.cfg));
  if (spec == "zero") return [](const ControlQuery&) { return 0.0; };
  return as_controller(load_mlp(ctx.input(spec)));
}

void cmd_solve(Context& ctx) {
  const auto sol = solve(ctx.cfg.market, ctx.cfg.prefs);
  std::string text = "t,h0,h1,h2\n";
  for (std::size_t k = 0; k < sol.t_grid.size(); ++k)
    text += io::csv_row({io::fmt(sol.t_grid[k]), io::fmt(sol.h0[k]), io::fmt(sol.h1[k]), io::fmt(sol.h2[k])});
  io::write_text(ctx.output("h_curves.csv"), text);
}

void cmd_train(Context& ctx) {
  TrainConfig tc = ctx.cfg.train;
  tc.checkpoint_path = ctx.out / "checkpoint.json";

  NoiseSource noise = NoiseSource::gaussian();
  const std::string& ns = ctx.flags.noise;
  if (ns.rfind("replay:", 0) == 0) {
    noise = NoiseSource::load_replay(ctx.input(ns.substr(7)), ctx.cfg.market.n_steps);
  } else if (ns != "gaussian") {
    throw ConfigError("--noise must be gaussian or replay:FILE");
  }

  std::optional<Mlp> init;
  if (!ctx.flags.init.empty()) init = load_mlp(ctx.input(ctx.flags.init));
  std::optional<Checkpoint> resume;
  if (!ctx.flags.resume.empty()) resume = load_checkpoint(ctx.input(ctx.flags.resume));

  const auto res = train(tc, ctx.cfg.market, noise, init, resume, [](const LogEntry& e) {
    if (e.val_reward) std::cerr << "iteration " << e.iteration << " val_reward " << *e.val_reward << "\n";
  });
  save_mlp(res.net, ctx.output("weights.json"));
  save_mlp(res.best_net, ctx.output("best_weights.json"));
  write_train_log(res.log, ctx.output("train_log.csv"));
  ctx.manifest.outputs.push_back(tc.checkpoint_path);
  ctx.manifest.notes = res.notes;
}

void cmd_project(Context& ctx) {
  const Config& cfg = ctx.cfg;
  std::optional<ClosedFormSolution> sol;
  ControlFn ctl;
  if (ctx.flags.closed_form) {
    sol = benchmark_solution(cfg);
    ctl = as_controller(*sol);
  } else if (!ctx.flags.weights.empty()) {
    ctl = as_controller(load_mlp(ctx.input(ctx.flags.weights)));
  } else {
    throw ConfigError("project needs --weights FILE or --closed-form");
  }
  const auto samples = harvest(ctl, cfg.market, cfg.prefs, cfg.harvest);
  const auto proj = project(samples, cfg.market);
  const auto bulk = bulk_error_map(ctl, proj, samples, cfg.market);
  write_projection_csv(proj, ctx.output("projection.csv"));
  write_error_map_csv(bulk, cfg.market, ctx.output("relative_error.csv"));

  nlohmann::ordered_json summary;
  summary["min_r2"] = proj.min_r2();
  summary["max_bulk_relative_error"] = bulk.max();
  int defined = 0;
  for (const auto& s : proj.steps) defined += s.defined ? 1 : 0;
  summary["defined_steps"] = defined;
  if (sol) {
    double dh1 = 0.0, dh2 = 0.0;
    for (const auto& s : proj.steps) {
      if (!s.defined) continue;
      const auto k = static_cast<std::size_t>(s.step);
      dh1 = std::max(dh1, std::fabs(s.h1_tilde - sol->h1[k]));
      dh2 = std::max(dh2, std::fabs(s.h2_tilde - sol->h2[k]));
    }
    summary["self_test"] = {{"max_abs_h1_diff", dh1}, {"max_abs_h2_diff", dh2}};
  }
  io::write_text(ctx.output("projection_summary.json"), summary.dump(2) + "\n");
}

void cmd_estimate_impact(Context& ctx) {
  if (ctx.flags.trades.empty() || ctx.flags.quotes.empty()) throw ConfigError("estimate-impact needs --trades and --quotes");
  auto trades = read_trades_csv(ctx.input(ctx.flags.trades));
  auto quotes = read_quotes_csv(ctx.input(ctx.flags.quotes));
  std::vector<BadRecord> bad = trades.bad;
  bad.insert(bad.end(), quotes.bad.begin(), quotes.bad.end());
  auto series = binize(std::move(trades.records), std::move(quotes.records), ctx.cfg.impact.bins, bad);
  const auto profiles = compute_profiles(series);
  const auto alpha = estimate_alpha(series, profiles, ctx.cfg.impact.dt);
  const auto kappa = estimate_kappa(series, profiles, ctx.cfg.impact.dt, ctx.cfg.impact.filter);
  io::write_text(ctx.output("estimates.json"), estimates_to_json(alpha, kappa, series, profiles));
  write_parameter_grid_csv(alpha, kappa, profiles, ctx.output("parameter_grid.csv"));
  write_bins_csv(series, ctx.output("bins.csv"));
}

void cmd_heatmap(Context& ctx) {
  const Config& cfg = ctx.cfg;
  ControlFactory source = closed_form_source(cfg.market);
  if (!ctx.flags.weights.empty()) {
    const Mlp net = load_mlp(ctx.input(ctx.flags.weights));
    source = [net](const Preferences&) { return as_controller(net); };
  }
  const auto heat = exec_time_heatmap(source, cfg.market, cfg.heatmap.a_grid, cfg.heatmap.phi_grid, cfg.heatmap.q0,
                                      cfg.heatmap.fraction, cfg.prefs.gamma);
  write_heatmap_csv(heat, cfg.heatmap.a_grid, cfg.heatmap.phi_grid, ctx.output("heatmap.csv"));
}

struct Stat {
  double mean = 0.0;
  double se = 0.0;
};

Stat stat(const std::vector<double>& v) {
  Stat s;
  const auto n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return s;
}

void cmd_compare(Context& ctx) {
  const Config& cfg = ctx.cfg;
  std::vector<std::pair<std::string, ControlFn>> controllers{{"closed_form", controller_by_name(ctx, "closed-form")},
                                                             {"zero", controller_by_name(ctx, "zero")}};
  for (const auto& item : ctx.flags.weight_list) {
    const auto eq = item.find('=');
    const std::string name = eq == std::string::npos ? fs::path(item).stem().string() : item.substr(0, eq);
    const std::string path = eq == std::string::npos ? item : item.substr(eq + 1);
    controllers.emplace_back(name, controller_by_name(ctx, path));
  }
  InitialConditions ic;
  ic.s0 = cfg.compare.s0;
  ic.q0 = {cfg.compare.q0};
  const auto n = static_cast<std::size_t>(cfg.compare.n_paths);

  std::vector<double> base_rewards;
  std::string text =
      "controller,n,mean_reward,reward_se,reward_ci_lo,reward_ci_hi,mean_mtm,mtm_se,mtm_ci_lo,mtm_ci_hi,"
      "diff_vs_closed_form,diff_se\n";
  for (const auto& [name, ctl] : controllers) {
    const auto batch = rollout(ctl, cfg.market, cfg.prefs, n, cfg.seed, ic, cfg.threads);
    std::vector<double> rewards, mtms;
    for (const auto& p : batch.paths) {
      rewards.push_back(reward(p, cfg.prefs));
      mtms.push_back(mtm(p));
    }
    if (base_rewards.empty()) base_rewards = rewards;
    std::vector<double> diff(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) diff[i] = rewards[i] - base_rewards[i];
    const Stat r = stat(rewards), m = stat(mtms), d = stat(diff);
    text += io::csv_row({name, io::fmt(static_cast<std::int64_t>(n)), io::fmt(r.mean), io::fmt(r.se),
                         io::fmt(r.mean - 1.96 * r.se), io::fmt(r.mean + 1.96 * r.se), io::fmt(m.mean), io::fmt(m.se),
                         io::fmt(m.mean - 1.96 * m.se), io::fmt(m.mean + 1.96 * m.se), io::fmt(d.mean),
                         io::fmt(d.se)});
  }
  io::write_text(ctx.output("compare.csv"), text);
}

void write_paths(Context& ctx, const std::vector<Trajectory>& paths) {
  std::string text = "path,step,t,S,Q,X,nu\n";
  std::string rewards = "path,reward,mtm\n";
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    for (std::size_t k = 0; k < p.states.size(); ++k) {
      const State& s = p.states[k];
      text += io::csv_row({io::fmt(static_cast<std::int64_t>(i)), io::fmt(s.step),
                           io::fmt(s.step * ctx.cfg.market.dt), io::fmt(s.S), io::fmt(s.Q), io::fmt(s.X),
                           k < p.controls.size() ? io::fmt(p.controls[k]) : std::string()});
    }
    rewards += io::csv_row({io::fmt(static_cast<std::int64_t>(i)), io::fmt(reward(p, ctx.cfg.prefs)), io::fmt(mtm(p))});
  }
  io::write_text(ctx.output("paths.csv"), text);
  io::write_text(ctx.output("rewards.csv"), rewards);
}

void cmd_simulate(Context& ctx) {
  const Config& cfg = ctx.cfg;
  const int n_steps = cfg.market.n_steps;
  if (!ctx.flags.nu_file.empty()) {
    // Open-loop replay: rows path,step,nu (extra columns ignored, blank nu skipped).
    const auto table = io::read_csv(ctx.input(ctx.flags.nu_file));
    const auto cp = table.column("path"), cs = table.column("step"), cn = table.column("nu");
    std::map<std::int64_t, std::vector<double>> controls;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& row = table.rows[r];
      if (row[cn].empty()) continue;
      auto& seq = controls[io::parse_int(row[cp], "path")];
      if (io::parse_int(row[cs], "step") != static_cast<std::int64_t>(seq.size()))
        throw DataError("nu file line " + std::to_string(table.line_numbers[r]) + ": steps must be consecutive from 0");
      seq.push_back(io::parse_double(row[cn], "nu"));
    }
    const auto eps = draw_noise(cfg.market, controls.size(), cfg.seed);
    std::vector<Trajectory> paths;
    std::size_t i = 0;
    for (const auto& [id, seq] : controls) {
      if (static_cast<int>(seq.size()) != n_steps)
        throw DataError("nu file: path " + std::to_string(id) + " has " + std::to_string(seq.size()) + " controls, need " +
                        std::to_string(n_steps));
      paths.push_back(replay_controls(seq, cfg.market, cfg.simulate.s0, cfg.simulate.q0, eps[i++]));
    }
    write_paths(ctx, paths);
    return;
  }
  InitialConditions ic;
  ic.s0 = cfg.simulate.s0;
  ic.q0 = {cfg.simulate.q0};
  const auto batch = rollout(controller_by_name(ctx, ctx.flags.controller), cfg.market, cfg.prefs,
                             static_cast<std::size_t>(cfg.simulate.n_paths), cfg.seed, ic, cfg.threads);
  write_paths(ctx, batch.paths);
}

void cmd_gen_data(Context& ctx) {
  const auto data = generate(ctx.cfg.gen);
  write_trades_csv(data.trades, ctx.output("trades.csv"));
  write_quotes_csv(data.quotes, ctx.output("quotes.csv"));
  write_truth_csv(data, ctx.output("truth.csv"));
  std::vector<std::string> log;
  export_replay(data.truth, ctx.output("replay.csv"), &log);
  ctx.manifest.notes = log;
}

int fail(const fs::path& out, const std::string& sub, const std::string& msg, int code) {
  std::cerr << "execlab " << sub << ": " << msg << "\n";
  try {
    io::write_text(out / "FAILED", sub + ": " + msg + "\n");
  } catch (...) {
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"execlab: optimal execution toolkit"};
  app.require_subcommand(1);
  Flags f;
  auto* seed_opt = app.add_option("--seed", f.seed, "Master seed")->check(CLI::NonNegativeNumber);
  auto* threads_opt = app.add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", f.out_dir, "Output directory");
  app.add_option("--config", f.config, "JSON config (default: $EXECLAB_CONFIG)");

  auto* solve_cmd = app.add_subcommand("solve", "Closed-form h curves");
  auto* train_cmd = app.add_subcommand("train", "Train a neural controller");
  train_cmd->add_option("--mode", f.mode, "mono or multi")->check(CLI::IsMember({"mono", "multi"}));
  train_cmd->add_option("--noise", f.noise, "gaussian or replay:FILE");
  train_cmd->add_option("--init", f.init, "Initial weights");
  train_cmd->add_option("--resume", f.resume, "Checkpoint to resume from");
  train_cmd->add_option("--iterations", f.iterations, "Override train.iterations")->check(CLI::PositiveNumber);
  auto* project_cmd = app.add_subcommand("project", "Project controls on the closed-form manifold");
  project_cmd->add_option("--weights", f.weights, "Network weights");
  project_cmd->add_flag("--closed-form", f.closed_form, "Project the closed-form controller (self test)");
  auto* impact_cmd = app.add_subcommand("estimate-impact", "Estimate impact coefficients from trades and quotes");
  impact_cmd->add_option("--trades", f.trades, "Trade CSV")->required();
  impact_cmd->add_option("--quotes", f.quotes, "Quote CSV")->required();
  auto* heatmap_cmd = app.add_subcommand("heatmap", "Steps to execute a fraction of the order");
  heatmap_cmd->add_option("--weights", f.weights, "Network weights (default: closed form)");
  auto* compare_cmd = app.add_subcommand("compare", "Reward and marked-to-market wealth per controller");
  compare_cmd->add_option("--weights", f.weight_list, "NAME=FILE or FILE, repeatable");
  auto* simulate_cmd = app.add_subcommand("simulate", "Roll out paths");
  simulate_cmd->add_option("--controller", f.controller, "closed-form, zero or a weights file");
  simulate_cmd->add_option("--nu-file", f.nu_file, "Replay controls from CSV with path,step,nu");
  auto* gen_cmd = app.add_subcommand("gen-data", "Synthetic trades, quotes and truth table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::string sub = app.get_subcommands().front()->get_name();
  const fs::path out(f.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fs::create_directories(out);
    fs::remove(out / "FAILED");
    fs::remove(out / "run_manifest.json");

    Context ctx;
    ctx.flags = f;
    ctx.out = out;
    ctx.cfg.train.checkpoint_every = 500;
    std::string config_path = f.config;
    if (config_path.empty())
      if (const char* env = std::getenv("EXECLAB_CONFIG")) config_path = env;
    if (!config_path.empty()) {
      ctx.cfg = cli::load_config_file(ctx.cfg, config_path);
      ctx.manifest.inputs.emplace_back(config_path);
    }
    if (seed_opt->count() > 0) ctx.cfg.seed = f.seed;
    if (threads_opt->count() > 0) ctx.cfg.threads = f.threads;
    if (!f.mode.empty()) ctx.cfg.train.mode = f.mode == "multi" ? PreferenceMode::multi : PreferenceMode::mono;
    if (f.iterations > 0) ctx.cfg.train.total_iterations = f.iterations;
    cli::propagate_globals(ctx.cfg);

    ctx.manifest.subcommand = sub;
    ctx.manifest.seed = ctx.cfg.seed;
    ctx.manifest.threads = ctx.cfg.threads;
    ctx.manifest.config = cli::to_json(ctx.cfg);

    if (app.got_subcommand(solve_cmd)) cmd_solve(ctx);
    else if (app.got_subcommand(train_cmd)) cmd_train(ctx);
    else if (app.got_subcommand(project_cmd)) cmd_project(ctx);
    else if (app.got_subcommand(impact_cmd)) cmd_estimate_impact(ctx);
    else if (app.got_subcommand(heatmap_cmd)) cmd_heatmap(ctx);
    else if (app.got_subcommand(compare_cmd)) cmd_compare(ctx);
    else if (app.got_subcommand(simulate_cmd)) cmd_simulate(ctx);
    else if (app.got_subcommand(gen_cmd)) cmd_gen_data(ctx);

    ctx.manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "output_hash " << cli::write_manifest(ctx.manifest, out) << "\n";
    return 0;
  } catch (const ConfigError& e) {
    return fail(out, sub, e.what(), 2);
  } catch (const DataError& e) {
    return fail(out, sub, e.what(), 2);
  } catch (const UnsupportedError& e) {
    return fail(out, sub, e.what(), 2);
  } catch (const NumericError& e) {
    return fail(out, sub, e.what(), 3);
  } catch (const RangeError& e) {
    return fail(out, sub, e.what(), 3);
  } catch (const HorizonError& e) {
    return fail(out, sub, e.what(), 3);
  } catch (const std::exception& e) {
    return fail(out, sub, e.what(), 1);
  }
}
