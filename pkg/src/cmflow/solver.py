"""Coarse-to-fine minimization of the composite focus cost.

Each pyramid scale is solved by a truncated Newton (Newton-CG) method:
Hessian-vector products come from forward differences of the analytic
gradient, and steps are accepted only after an Armijo backtracking line
search, so the cost never increases within a scale.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .events import EventSlice
from .exceptions import GeometryError, NumericalError
from .flowrep import DenseFlow, TileGrid, dense_from_tiles, init_next_slice, tiles_per_side, upsample_tile_grid
from .objective import ObjectiveReport, TileObjective, composite_cost
from .pde import SCHEMES

logger = logging.getLogger(__name__)

GRADIENT_MODES = ("analytic", "finite-difference")


@dataclass(frozen=True)
class SolveConfig:
    n_scales: int = 5
    lam: float = 0.0025
    max_iters_per_scale: int = 20
    warp_mode: str = "none"
    n_bins: int = 5
    gradient: str = "analytic"
    tol: float = 1e-6
    gtol: float = 1e-6
    sigma: float = 1.0
    cg_max_iters: int = 20
    fd_step: float = 1e-4

    def __post_init__(self):
        if self.n_scales < 1:
            raise ValueError("n_scales must be >= 1")
        if self.max_iters_per_scale < 1:
            raise ValueError("max_iters_per_scale must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.warp_mode not in SCHEMES:
            raise ValueError(f"warp_mode must be one of {SCHEMES}")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if self.gradient not in GRADIENT_MODES:
            raise ValueError(f"gradient must be one of {GRADIENT_MODES}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass
class ScaleTrace:
    scale: int
    iterations: int
    initial_cost: float
    report: ObjectiveReport
    stop_reason: str


@dataclass
class SolveResult:
    finest_grid: TileGrid
    dense: DenseFlow
    reports: list[ObjectiveReport]
    iterations: list[int]
    traces: list[ScaleTrace] = field(default_factory=list)

    @property
    def report(self) -> ObjectiveReport:
        return self.reports[-1]

    @property
    def total_iterations(self) -> int:
        return sum(self.iterations)


@dataclass
class FailedSolve:
    """Placeholder in :func:`solve_sequence` output for a slice that raised."""

    index: int
    error: Exception


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    nit: int
    stop_reason: str
    history: list[float]


# --------------------------------------------------------------------------- Newton-CG


def _check_finite(value, grad, nit):
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite cost or gradient at iterate {nit}")


def newton_cg(
    fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    *,
    fun: Callable[[np.ndarray], float] | None = None,
    max_iter: int = 20,
    gtol: float = 1e-6,
    tol: float = 1e-6,
    cg_max_iter: int = 20,
    armijo: float = 1e-4,
    max_backtracks: int = 30,
    on_accept: Callable[[np.ndarray], tuple[float, np.ndarray]] | None = None,
) -> MinimizeResult:
    """Truncated-Newton minimization with monotone Armijo backtracking.

    ``on_accept(x)``, when given, is called after every accepted step and
    returns the (possibly re-linearized) value and gradient at ``x``; a step
    whose re-linearized value exceeds the previous one is rolled back.
    """
    fun = fun or (lambda z: fun_grad(z)[0])
    x = np.array(x0, dtype=np.float64)
    fx, g = fun_grad(x)
    _check_finite(fx, g, 0)
    history = [fx]
    nit = 0
    reason = "max_iter"
    while nit < max_iter:
        gnorm = float(np.linalg.norm(g))
        if gnorm < gtol:
            reason = "gtol"
            break
        p = _truncated_cg(fun_grad, x, g, gnorm, cg_max_iter)
        slope = float(g @ p)
        if not slope < 0:
            p, slope = -g, -gnorm * gnorm
        alpha = 1.0
        for _ in range(max_backtracks):
            trial = x + alpha * p
            ft = fun(trial)
            if math.isfinite(ft) and ft <= fx + armijo * alpha * slope:
                break
            alpha *= 0.5
        else:
            reason = "line_search"
            break
        if on_accept is not None:
            ft, gt = on_accept(trial)
            if not ft <= fx:
                on_accept(x)
                reason = "relinearized_increase"
                break
        else:
            ft, gt = fun_grad(trial)
        nit += 1
        _check_finite(ft, gt, nit)
        decrease = fx - ft
        x, fx, g = trial, ft, gt
        history.append(fx)
        if decrease < tol:
            reason = "tol"
            break
    return MinimizeResult(x, fx, nit, reason, history)


def _truncated_cg(fun_grad, x, g, gnorm, max_iter):
    """Approximately solve ``H p = -g`` with CG, stopping on negative curvature."""
    eps = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    p = np.zeros_like(x)
    r = -g.copy()
    d = r.copy()
    rr = float(r @ r)
    tol = min(0.5, math.sqrt(gnorm)) * gnorm
    for i in range(max_iter):
        dnorm = float(np.linalg.norm(d))
        hd = (fun_grad(x + (eps / dnorm) * d)[1] - g) * (dnorm / eps)
        curv = float(d @ hd)
        if curv <= 0:
            if i == 0:
                # steepest descent scaled by the curvature magnitude along it
                return d * (rr / abs(curv)) if curv < 0 else -g
            break
        alpha = rr / curv
        p = p + alpha * d
        r = r - alpha * hd
        rr_new = float(r @ r)
        if math.sqrt(rr_new) < tol:
            break
        d = r + (rr_new / rr) * d
        rr = rr_new
    return p


# --------------------------------------------------------------------------- per-scale and pyramid


def _fd_fun_grad(events, scale, config):
    w, h = events.width, events.height

    def cost(theta):
        grid = TileGrid.from_vector(theta, scale, w, h)
        return composite_cost(events, grid, config.lam, config.warp_mode, config.n_bins, config.sigma).cost

    def fun_grad(theta):
        theta = np.asarray(theta, dtype=np.float64)
        g = np.empty_like(theta)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = config.fd_step
            g[i] = (cost(theta + e) - cost(theta - e)) / (2.0 * config.fd_step)
        return cost(theta), g

    return cost, fun_grad


def _optimize(events: EventSlice, init: TileGrid, config: SolveConfig):
    if (init.width, init.height) != (events.width, events.height):
        raise GeometryError("initial grid and events disagree on sensor size")
    theta0 = init.as_vector()
    obj = TileObjective(
        events, init.scale, lam=config.lam, warp_mode=config.warp_mode, n_bins=config.n_bins, sigma=config.sigma
    )
    if config.gradient == "finite-difference":
        fun, fun_grad = _fd_fun_grad(events, init.scale, config)
        on_accept = None
    else:
        obj.relinearize(theta0)
        fun, fun_grad = obj.value, obj.value_and_grad

        def on_accept(theta):
            obj.relinearize(theta)
            return obj.value_and_grad(theta)

        if config.warp_mode == "none":
            on_accept = None
    res = newton_cg(
        fun_grad,
        theta0,
        fun=fun,
        max_iter=config.max_iters_per_scale,
        gtol=config.gtol,
        tol=config.tol,
        cg_max_iter=config.cg_max_iters,
        on_accept=on_accept,
    )
    grid = TileGrid.from_vector(res.x, init.scale, init.width, init.height)
    report = composite_cost(events, grid, config.lam, config.warp_mode, config.n_bins, config.sigma)
    trace = ScaleTrace(init.scale, res.nit, res.history[0], report, res.stop_reason)
    logger.debug(
        "event=scale_done scale=%d iterations=%d cost0=%.6g cost=%.6g f=%.6g stop=%s",
        init.scale, res.nit, res.history[0], report.cost, report.f, res.stop_reason,
    )
    return grid, trace


def optimize_scale(events: EventSlice, init: TileGrid, config: SolveConfig | None = None) -> TileGrid:
    """Minimize the composite cost over the tiles of ``init``'s scale, starting at ``init``."""
    config = config or SolveConfig()
    events.require_events()
    return _optimize(events, init, config)[0]


def _check_pyramid(events, config):
    side = tiles_per_side(config.n_scales)
    if side > min(events.width, events.height):
        raise GeometryError(
            f"{config.n_scales} scales need {side}x{side} tiles, more than the {events.width}x{events.height} sensor"
        )


def solve_multiscale(
    events: EventSlice,
    config: SolveConfig | None = None,
    warm_start: DenseFlow | None = None,
) -> SolveResult:
    """Solve scales ``1..n_scales`` coarse to fine.

    Cold starts begin from zero flow. With ``warm_start`` (the previous
    slice's finest flow) the coarsest scale starts from its tile means and
    finer scales from the average of those means and the upsampled coarser
    solution.
    """
    config = config or SolveConfig()
    events.require_events()
    _check_pyramid(events, config)
    w, h = events.width, events.height
    grid = None
    traces = []
    for scale in range(1, config.n_scales + 1):
        if scale == 1:
            init = TileGrid.zeros(1, w, h) if warm_start is None else init_next_slice(warm_start, 1)
        else:
            up = upsample_tile_grid(grid)
            init = up if warm_start is None else init_next_slice(warm_start, scale, up)
        grid, trace = _optimize(events, init, config)
        traces.append(trace)
    return SolveResult(
        finest_grid=grid,
        dense=dense_from_tiles(grid, events.t_mid),
        reports=[t.report for t in traces],
        iterations=[t.iterations for t in traces],
        traces=traces,
    )


def solve_sequence(slices: Sequence[EventSlice], config: SolveConfig | None = None):
    """Solve consecutive slices, warm-starting each from its predecessor.

    A slice that raises is reported as :class:`FailedSolve` and the next slice
    starts cold.
    """
    config = config or SolveConfig()
    results = []
    warm = None
    for i, events in enumerate(slices):
        try:
            res = solve_multiscale(events, config, warm_start=warm)
        except Exception as exc:  # noqa: BLE001 - reported per slice, sequence continues
            logger.warning("event=slice_failed index=%d error=%s", i, exc)
            results.append(FailedSolve(i, exc))
            warm = None
            continue
        results.append(res)
        warm = res.dense
    return results


def with_overrides(config: SolveConfig, **kwargs) -> SolveConfig:
    return replace(config, **{k: v for k, v in kwargs.items() if v is not None})
