import numpy as np
import pytest

from cmflow.events import EventSlice, oracle_scene
from cmflow.exceptions import GeometryError, NumericalError
from cmflow.flowrep import TileGrid
from cmflow.metrics import aee_and_outliers, eval_mask, to_displacement
from cmflow.solver import (
    FailedSolve,
    SolveConfig,
    newton_cg,
    optimize_scale,
    solve_multiscale,
    solve_sequence,
    with_overrides,
)


def quadratic(a, b):
    def fg(x):
        return 0.5 * x @ a @ x - b @ x, a @ x - b

    return fg


def test_newton_cg_solves_a_quadratic():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(6, 6))
    a = m @ m.T + 6 * np.eye(6)
    b = rng.normal(size=6)
    res = newton_cg(quadratic(a, b), np.zeros(6), gtol=1e-9, tol=0.0)
    assert np.allclose(res.x, np.linalg.solve(a, b), atol=1e-6)
    assert res.stop_reason == "gtol"


def rosenbrock(x):
    f = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
    return f, g


def test_newton_cg_rosenbrock_monotone():
    res = newton_cg(rosenbrock, np.array([-1.2, 1.0]), max_iter=200, gtol=1e-8, tol=0.0)
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-4)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_newton_cg_rejects_nan():
    with pytest.raises(NumericalError):
        newton_cg(lambda x: (float("nan"), x), np.ones(2))


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(n_scales=0)
    with pytest.raises(ValueError):
        SolveConfig(lam=-1)
    with pytest.raises(ValueError):
        SolveConfig(warp_mode="spline")
    with pytest.raises(ValueError):
        SolveConfig(gradient="symbolic")
    assert with_overrides(SolveConfig(), n_scales=2, lam=None).n_scales == 2


def test_simultaneous_events_are_a_fixed_point():
    rng = np.random.default_rng(0)
    ev = EventSlice(rng.integers(0, 16, 300), rng.integers(0, 16, 300), np.zeros(300), np.ones(300), width=16, height=16)
    init = TileGrid(2, rng.normal(size=(2, 2, 2)), 16, 16)
    out = optimize_scale(ev, init, SolveConfig(lam=0.0))
    assert np.array_equal(out.uv, init.uv)


def test_true_flow_is_stationary_at_the_coarsest_scale(oracle):
    ev, _ = oracle
    init = TileGrid.constant((8.0, 0.0), 1, 64, 64)
    out = optimize_scale(ev, init)
    assert np.allclose(out.uv, init.uv, atol=0.25)


def test_coarsest_scale_recovers_constant_motion(oracle):
    ev, _ = oracle
    res = solve_multiscale(ev, SolveConfig(n_scales=1))
    u, v = res.finest_grid.uv[:, 0, 0]
    assert abs(u - 8.0) < 0.8 and abs(v) < 0.8
    assert res.report.f > 1.0


def test_finite_difference_mode_runs(oracle):
    ev, _ = oracle
    res = solve_multiscale(ev, SolveConfig(n_scales=1, gradient="finite-difference", max_iters_per_scale=5))
    assert abs(res.finest_grid.uv[0, 0, 0] - 8.0) < 0.8


def test_too_many_scales_for_sensor():
    ev = EventSlice([0, 3], [0, 3], [0.0, 1.0], [1, 1], width=4, height=4)
    with pytest.raises(GeometryError):
        solve_multiscale(ev, SolveConfig(n_scales=4))


def test_empty_slice():
    with pytest.raises(ValueError):
        solve_multiscale(EventSlice.empty(8, 8))


@pytest.mark.slow
def test_four_scale_recovery(oracle):
    ev, gt = oracle
    res = solve_multiscale(ev, SolveConfig(n_scales=4))
    aee, out = aee_and_outliers(
        to_displacement(res.dense, ev.duration), to_displacement(gt, ev.duration), eval_mask(ev)
    )
    assert aee < 0.5 and out == 0.0
    # per-scale monotonicity, up to summation-order rounding
    assert all(t.report.cost <= t.initial_cost * (1 + 1e-12) for t in res.traces)
    assert len(res.traces) == 4


@pytest.mark.slow
def test_warm_start_needs_no_more_iterations(oracle):
    ev, _ = oracle
    results = solve_sequence([ev, ev], SolveConfig(n_scales=3))
    assert results[1].total_iterations <= results[0].total_iterations


def test_sequence_survives_a_failing_slice(oracle):
    ev, _ = oracle
    narrow = EventSlice([0, 0], [0, 3], [0.0, 1.0], [1, 1], width=1, height=4)
    config = SolveConfig(n_scales=2, max_iters_per_scale=2)
    out = solve_sequence([ev, narrow, ev], config)
    assert isinstance(out[1], FailedSolve) and isinstance(out[1].error, GeometryError)
    assert not isinstance(out[0], FailedSolve) and not isinstance(out[2], FailedSolve)


@pytest.mark.slow
def test_time_aware_solve_runs():
    ev, gt = oracle_scene(n_events=2000, rate=10)
    res = solve_multiscale(ev, SolveConfig(n_scales=2, warp_mode="upwind"))
    assert res.report.f > 1.0
