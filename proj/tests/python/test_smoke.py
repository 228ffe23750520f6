import math

import pytest

import execlab as ex


def test_solve_terminal_and_grid():
    sol = ex.solve(ex.MarketParams(), ex.Preferences(0.01, 0.007))
    assert len(sol.t_grid) == 78
    assert sol.h2[-1] == -0.02
    assert all(h == 0.0 for h in sol.h1)


def test_closed_form_liquidates_noise_free():
    mp = ex.MarketParams()
    pref = ex.Preferences(0.01, 0.007)
    ctl = ex.closed_form_controller(ex.solve(mp, pref))
    traj = ex.simulate_path(ctl, mp, pref, 10.0, -1.0, [0.0] * 77)
    assert abs(traj.states[-1].Q) < 0.01


def test_errors_map_to_python_exceptions():
    with pytest.raises(ex.ConfigError):
        ex.solve(ex.MarketParams(), ex.Preferences(0.0, 0.007))
    with pytest.raises(ex.UnsupportedError):
        ex.solve(ex.MarketParams(), ex.Preferences(0.01, 0.007, 1.5))
    assert issubclass(ex.SingularityError, ex.NumericError)


def test_python_controller_matches_closed_form():
    mp = ex.MarketParams()
    pref = ex.Preferences()
    sol = ex.solve(mp, pref)
    wrapped = ex.python_controller(lambda step, t, q: sol.control(t, q))
    a = ex.rollout(wrapped, mp, pref, 5, seed=3)
    b = ex.rollout(ex.closed_form_controller(sol), mp, pref, 5, seed=3)
    assert [p.reward(pref) for p in a] == [p.reward(pref) for p in b]


def test_zero_controller_projection_and_network_roundtrip(tmp_path):
    mp = ex.MarketParams()
    steps = ex.project_controller(ex.closed_form_controller(ex.solve(mp, ex.Preferences())), mp, ex.Preferences(), 200)
    assert len(steps) == 77
    assert all(abs(s.r2 - 1.0) < 1e-12 for s in steps if s.defined)

    net = ex.init_mlp(5, 4)
    assert net.layer_sizes == [4, 5, 5, 5, 1]
    path = tmp_path / "net.json"
    net.save(path)
    back = ex.load_mlp(path)
    assert back.params() == net.params()
    assert math.isfinite(back.controller()(3, 3.0, -0.5))


def test_short_training_run_is_deterministic():
    mp = ex.MarketParams()
    a = ex.train(mp, ex.Preferences(), 5, validation_every=5)
    b = ex.train(mp, ex.Preferences(), 5, validation_every=5)
    assert a.net.params() == b.net.params()
    assert a.iterations_done == 5
    assert a.log[0].val_reward is not None


def test_planted_impact_is_recovered():
    est = ex.generate_and_estimate(n_days=30)
    assert abs(est["alpha"] - 0.16) < 0.1 * 0.16
    assert abs(est["kappa"] - 0.24) < 0.1 * 0.24


def test_heatmap_monotone():
    heat = ex.exec_time_heatmap(ex.MarketParams(), [0.01, 0.001], [0.07, 0.007, 0.001])
    for row in heat:
        assert row == sorted(row)
    assert all(heat[0][j] <= heat[1][j] for j in range(3))
