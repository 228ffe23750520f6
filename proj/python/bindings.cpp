#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "execlab/closedform.hpp"
#include "execlab/controller.hpp"
#include "execlab/datagen.hpp"
#include "execlab/dynamics.hpp"
#include "execlab/errors.hpp"
#include "execlab/explain.hpp"
#include "execlab/impact.hpp"
#include "execlab/train.hpp"

namespace py = pybind11;
using namespace execlab;

namespace {

// Distinct type so controllers stay opaque handles in Python instead of being
// converted by the std::function caster.
struct Controller {
  ControlFn fn;
};

}  // namespace

PYBIND11_MODULE(_execlab, m) {
  m.doc() = "Optimal execution: closed-form benchmark, neural controllers, projections and impact estimation";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto numeric = py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<SingularityError>(m, "SingularityError", numeric.ptr());
  py::register_exception<HorizonError>(m, "HorizonError", base.ptr());
  py::register_exception<UnsupportedError>(m, "UnsupportedError", base.ptr());
  py::register_exception<RangeError>(m, "RangeError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  py::class_<Seasonality>(m, "Seasonality")
      .def(py::init<>())
      .def(py::init([](std::vector<double> volume, std::vector<double> spread) {
             return Seasonality{std::move(volume), std::move(spread)};
           }),
           py::arg("volume_profile"), py::arg("spread_profile"))
      .def_readwrite("volume_profile", &Seasonality::volume_profile)
      .def_readwrite("spread_profile", &Seasonality::spread_profile);

  py::class_<MarketParams>(m, "MarketParams")
      .def(py::init<>())
      .def(py::init([](double alpha, double kappa, double sigma, double dt, int n_steps) {
             MarketParams mp;
             mp.alpha = alpha;
             mp.kappa = kappa;
             mp.sigma = sigma;
             mp.dt = dt;
             mp.n_steps = n_steps;
             return mp;
           }),
           py::arg("alpha") = 0.01, py::arg("kappa") = 1.0, py::arg("sigma") = 0.1, py::arg("dt") = 1.0,
           py::arg("n_steps") = 77)
      .def_readwrite("alpha", &MarketParams::alpha)
      .def_readwrite("kappa", &MarketParams::kappa)
      .def_readwrite("sigma", &MarketParams::sigma)
      .def_readwrite("dt", &MarketParams::dt)
      .def_readwrite("n_steps", &MarketParams::n_steps)
      .def_readwrite("seasonality", &MarketParams::seasonality)
      .def("horizon", &MarketParams::horizon)
      .def("validate", &MarketParams::validate);

  py::class_<Preferences>(m, "Preferences")
      .def(py::init([](double A, double phi, double gamma) { return Preferences{A, phi, gamma}; }), py::arg("A") = 0.01,
           py::arg("phi") = 0.007, py::arg("gamma") = 2.0)
      .def_readwrite("A", &Preferences::A)
      .def_readwrite("phi", &Preferences::phi)
      .def_readwrite("gamma", &Preferences::gamma)
      .def("__repr__", [](const Preferences& p) {
        return "Preferences(A=" + std::to_string(p.A) + ", phi=" + std::to_string(p.phi) +
               ", gamma=" + std::to_string(p.gamma) + ")";
      });

  py::class_<ClosedFormSolution>(m, "ClosedFormSolution")
      .def_readonly("t_grid", &ClosedFormSolution::t_grid)
      .def_readonly("h0", &ClosedFormSolution::h0)
      .def_readonly("h1", &ClosedFormSolution::h1)
      .def_readonly("h2", &ClosedFormSolution::h2)
      .def("control", [](const ClosedFormSolution& s, double t, double q) { return control(s, t, q); }, py::arg("t"),
           py::arg("q"))
      .def("value", [](const ClosedFormSolution& s, double t, double x, double S, double q) { return value(s, t, x, S, q); },
           py::arg("t"), py::arg("x"), py::arg("s"), py::arg("q"));

  m.def("solve", [](const MarketParams& mp, const Preferences& pref, int substeps) {
        return solve(mp, pref, SolveOptions{substeps});
      },
      py::arg("market"), py::arg("prefs"), py::arg("substeps") = 10);
  m.def("time_to_fraction", &time_to_fraction, py::arg("solution"), py::arg("market"), py::arg("q0") = -1.0,
        py::arg("fraction") = 0.9);

  py::class_<ControlQuery>(m, "ControlQuery")
      .def_readonly("step", &ControlQuery::step)
      .def_readonly("t", &ControlQuery::t)
      .def_readonly("q", &ControlQuery::q)
      .def_readonly("A", &ControlQuery::A)
      .def_readonly("phi", &ControlQuery::phi);

  py::class_<State>(m, "State")
      .def_readonly("step", &State::step)
      .def_readonly("S", &State::S)
      .def_readonly("Q", &State::Q)
      .def_readonly("X", &State::X);

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("eps", &Trajectory::eps)
      .def_readonly("states", &Trajectory::states)
      .def_readonly("controls", &Trajectory::controls)
      .def("reward", [](const Trajectory& t, const Preferences& p) { return reward(t, p); })
      .def("mtm", [](const Trajectory& t) { return mtm(t); });

  // Controllers cross the boundary as opaque callables.
  py::class_<Controller>(m, "Controller")
      .def("__call__", [](const Controller& c, int step, double t, double q, double A, double phi) {
        return c.fn(ControlQuery{step, t, q, A, phi});
      },
           py::arg("step"), py::arg("t"), py::arg("q"), py::arg("A") = 0.01, py::arg("phi") = 0.007);
  m.def("closed_form_controller", [](const ClosedFormSolution& s) { return Controller{as_controller(s)}; });
  m.def("zero_controller", [] { return Controller{[](const ControlQuery&) { return 0.0; }}; });
  m.def("python_controller", [](std::function<double(int, double, double)> f) {
    return Controller{[f](const ControlQuery& q) {
      py::gil_scoped_acquire gil;
      return f(q.step, q.t, q.q);
    }};
  }, "Wraps f(step, t, q) -> rate.");

  m.def("simulate_path",
        [](const Controller& c, const MarketParams& mp, const Preferences& pref, double s0, double q0,
           std::vector<double> eps) { return simulate_path(c.fn, mp, pref, s0, q0, eps); },
        py::arg("controller"), py::arg("market"), py::arg("prefs"), py::arg("s0"), py::arg("q0"), py::arg("eps"));
  m.def("rollout",
        [](const Controller& c, const MarketParams& mp, const Preferences& pref, std::size_t batch, std::uint64_t seed,
           double s0, double q0) {
          InitialConditions ic;
          ic.s0 = s0;
          ic.q0 = {q0};
          return rollout(c.fn, mp, pref, batch, seed, ic).paths;
        },
        py::arg("controller"), py::arg("market"), py::arg("prefs"), py::arg("batch"), py::arg("seed") = 1,
        py::arg("s0") = 10.0, py::arg("q0") = -1.0);

  py::class_<Mlp>(m, "Mlp")
      .def_property_readonly("d_in", &Mlp::d_in)
      .def_property_readonly("layer_sizes", &Mlp::layer_sizes)
      .def("params", [](const Mlp& n) { return std::vector<double>(n.params().begin(), n.params().end()); })
      .def("controller", [](const Mlp& n) { return Controller{as_controller(n)}; })
      .def("save", [](const Mlp& n, const std::filesystem::path& p) { save_mlp(n, p); });
  m.def("load_mlp", [](const std::filesystem::path& p) { return load_mlp(p); });
  m.def("init_mlp", [](std::uint64_t seed, int d_in) {
    Rng rng = make_rng(seed, 0);
    return init_mlp(rng, d_in);
  }, py::arg("seed"), py::arg("d_in") = 2);

  py::class_<LogEntry>(m, "LogEntry")
      .def_readonly("iteration", &LogEntry::iteration)
      .def_readonly("train_loss", &LogEntry::train_loss)
      .def_readonly("val_reward", &LogEntry::val_reward);
  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("net", &TrainResult::net)
      .def_readonly("best_net", &TrainResult::best_net)
      .def_readonly("best_val_reward", &TrainResult::best_val_reward)
      .def_readonly("iterations_done", &TrainResult::iterations_done)
      .def_readonly("log", &TrainResult::log);
  m.def("train",
        [](const MarketParams& mp, const Preferences& pref, int iterations, bool multi, std::uint64_t seed,
           int validation_every, double dropout_rate) {
          TrainConfig cfg;
          cfg.prefs = pref;
          cfg.total_iterations = iterations;
          cfg.mode = multi ? PreferenceMode::multi : PreferenceMode::mono;
          cfg.seed = seed;
          cfg.validation_every = validation_every;
          cfg.dropout_rate = dropout_rate;
          py::gil_scoped_release release;
          return train(cfg, mp, NoiseSource::gaussian());
        },
        py::arg("market"), py::arg("prefs"), py::arg("iterations"), py::arg("multi") = false, py::arg("seed") = 1,
        py::arg("validation_every") = 100, py::arg("dropout_rate") = 0.2);

  py::class_<StepProjection>(m, "StepProjection")
      .def_readonly("step", &StepProjection::step)
      .def_readonly("defined", &StepProjection::defined)
      .def_readonly("beta1", &StepProjection::beta1)
      .def_readonly("beta2", &StepProjection::beta2)
      .def_readonly("h1_tilde", &StepProjection::h1_tilde)
      .def_readonly("h2_tilde", &StepProjection::h2_tilde)
      .def_readonly("r2", &StepProjection::r2)
      .def_readonly("n", &StepProjection::n);
  m.def("project_controller",
        [](const Controller& c, const MarketParams& mp, const Preferences& pref, int n_paths, std::uint64_t seed) {
          HarvestOptions opts;
          opts.n_paths = n_paths;
          opts.seed = seed;
          return project(harvest(c.fn, mp, pref, opts), mp).steps;
        },
        py::arg("controller"), py::arg("market"), py::arg("prefs"), py::arg("n_paths") = 2000, py::arg("seed") = 1);
  m.def("exec_time_heatmap",
        [](const MarketParams& mp, const std::vector<double>& a, const std::vector<double>& phi, double q0,
           double fraction) { return exec_time_heatmap(closed_form_source(mp), mp, a, phi, q0, fraction); },
        py::arg("market"), py::arg("a_grid"), py::arg("phi_grid"), py::arg("q0") = -1.0, py::arg("fraction") = 0.9);

  m.def("generate_and_estimate",
        [](int n_stocks, int n_days, double alpha_bar, double kappa_bar, std::uint64_t seed) {
          GenConfig cfg;
          cfg.n_stocks = n_stocks;
          cfg.n_days = n_days;
          cfg.alpha_bar = alpha_bar;
          cfg.kappa_bar = kappa_bar;
          cfg.seed = seed;
          const auto data = generate(cfg);
          const auto prof = compute_profiles(data.truth);
          const auto a = estimate_alpha(data.truth, prof, cfg.dt);
          const auto k = estimate_kappa(data.truth, prof, cfg.dt);
          py::dict out;
          out["alpha"] = a.stats.coef;
          out["alpha_stderr"] = a.stats.stderr_;
          out["kappa"] = k.stats.coef;
          out["kappa_stderr"] = k.stats.stderr_;
          out["bins"] = data.truth.bins.size();
          return out;
        },
        "Synthetic trades and quotes with planted impact, then the two regressions.", py::arg("n_stocks") = 4,
        py::arg("n_days") = 20, py::arg("alpha_bar") = 0.16, py::arg("kappa_bar") = 0.24, py::arg("seed") = 1);
}
