"""Focus objectives over images of warped events.

The optimized quantity is ``1/f + lam * TV`` where ``f`` weighs the squared
IWE gradient magnitude at the slice's first, middle and last timestamps
1:2:1 and divides by four times its zero-flow value. :class:`TileObjective`
evaluates it together with its analytic gradient with respect to the
tile-grid parameters; the remaining functions are the standalone pieces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventSlice
from .exceptions import DegenerateInputError, GeometryError
from .flowrep import (
    DenseFlow,
    TileGrid,
    dense_from_tiles,
    interpolation_weights,
    pixel_to_tile_coords,
    tiles_per_side,
)
from .pde import SCHEMES, FlowVolume, build_volume
from .warp import Iwe, splat, splat_position_gradient, warp_with_velocities

REF_WEIGHTS = (1.0, 2.0, 1.0)
TIMESTAMP_MASK_MIN = 1e-3


@dataclass(frozen=True)
class ObjectiveReport:
    f: float
    g_t1: float
    g_tmid: float
    g_tN: float
    g_zero: float
    tv: float = 0.0
    cost: float = float("nan")


def _values(image):
    return image.values if isinstance(image, Iwe) else np.asarray(image, dtype=np.float64)


def gradient_magnitude(iwe) -> float:
    """Mean squared gradient norm; central differences inside, one-sided at borders."""
    img = _values(iwe)
    if min(img.shape) < 2:
        raise ValueError("gradient magnitude needs an image of at least 2x2 pixels")
    gy, gx = np.gradient(img)
    return float(np.mean(gx * gx + gy * gy))


def _diff_adjoint(r, axis):
    """Transpose of ``np.gradient`` (edge_order=1) along ``axis``."""
    r = np.moveaxis(r, axis, 0)
    out = np.zeros_like(r)
    out[0] -= r[0]
    out[1] += r[0]
    out[:-2] -= 0.5 * r[1:-1]
    out[2:] += 0.5 * r[1:-1]
    out[-2] -= r[-1]
    out[-1] += r[-1]
    return np.moveaxis(out, 0, axis)


def gradient_magnitude_adjoint(img) -> np.ndarray:
    """Derivative of :func:`gradient_magnitude` with respect to each pixel."""
    gy, gx = np.gradient(img)
    return (2.0 / img.size) * (_diff_adjoint(gx, 1) + _diff_adjoint(gy, 0))


def image_variance(iwe) -> float:
    img = _values(iwe)
    if img.size == 0:
        raise ValueError("variance of an empty image")
    return float(np.var(img))


def total_variation(grid) -> float:
    """Anisotropic (L1) TV of the tile grid, divided by the tile count."""
    uv = grid.uv if isinstance(grid, TileGrid) else np.asarray(grid, dtype=np.float64)
    s2 = uv.shape[1] * uv.shape[2]
    return float((np.abs(np.diff(uv, axis=1)).sum() + np.abs(np.diff(uv, axis=2)).sum()) / s2)


def total_variation_gradient(grid) -> np.ndarray:
    uv = grid.uv if isinstance(grid, TileGrid) else np.asarray(grid, dtype=np.float64)
    s2 = uv.shape[1] * uv.shape[2]
    out = np.zeros_like(uv)
    for axis in (1, 2):
        sgn = np.sign(np.diff(uv, axis=axis))
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] -= sgn
        out[tuple(hi)] += sgn
    return out / s2


def _reference_times(events: EventSlice):
    return (events.t_first, events.t_mid, events.t_last)


def zero_flow_sharpness(events: EventSlice, sigma=1.0) -> float:
    """``G`` of the identity-warp IWE (events at their recorded pixels)."""
    img = splat(events.x, events.y, events.width, events.height, sigma)
    return gradient_magnitude(img)


def _per_event_velocity(events, flow, warp_mode, n_bins):
    if isinstance(flow, FlowVolume):
        if (flow.width, flow.height) != (events.width, events.height):
            raise GeometryError("flow volume and events disagree on sensor size")
        return flow.sample(events.x, events.y, events.t)
    if (flow.width, flow.height) != (events.width, events.height):
        raise GeometryError("flow and events disagree on sensor size")
    if warp_mode == "none":
        return flow.u[events.y, events.x], flow.v[events.y, events.x]
    volume = build_volume(flow, events, n_bins, warp_mode)
    return volume.sample(events.x, events.y, events.t)


def _focus_from_velocities(events, u, v, sigma, g_zero=None) -> ObjectiveReport:
    if g_zero is None:
        g_zero = zero_flow_sharpness(events, sigma)
    if not g_zero > 0:
        raise DegenerateInputError("zero-flow IWE has no gradient; the focus ratio is undefined")
    gs = []
    for t_ref in _reference_times(events):
        w = warp_with_velocities(events, u, v, t_ref)
        gs.append(gradient_magnitude(splat(w.x, w.y, events.width, events.height, sigma)))
    # (G1 + GN) + 2 Gmid is exactly 4 G0 when all three agree
    num = (gs[0] + gs[2]) + 2.0 * gs[1]
    f = num / (4.0 * g_zero)
    return ObjectiveReport(f=f, g_t1=gs[0], g_tmid=gs[1], g_tN=gs[2], g_zero=g_zero, tv=0.0, cost=_inverse(f))


def _inverse(f):
    return 1.0 / f if f > 0 else float("inf")


def multi_ref_focus(
    events: EventSlice,
    flow,
    warp_mode: str = "none",
    n_bins: int = 5,
    sigma: float = 1.0,
) -> ObjectiveReport:
    """Multi-reference focus ``f`` of a dense flow or a prebuilt :class:`FlowVolume`.

    With a :class:`DenseFlow` and ``warp_mode`` ``"upwind"``/``"burgers"`` the
    flow is taken as the field at ``t_mid`` and transported first.
    """
    events.require_events()
    if warp_mode not in SCHEMES:
        raise ValueError(f"unknown warp mode {warp_mode!r}")
    u, v = _per_event_velocity(events, flow, warp_mode, n_bins)
    return _focus_from_velocities(events, u, v, sigma)


def composite_cost(
    events: EventSlice,
    grid: TileGrid,
    lam: float = 0.0025,
    warp_mode: str = "none",
    n_bins: int = 5,
    sigma: float = 1.0,
) -> ObjectiveReport:
    """``1/f + lam * TV(grid)`` with ``f`` evaluated on the interpolated dense flow."""
    if lam < 0:
        raise ValueError("regularizer weight must be non-negative")
    events.require_events()
    dense = dense_from_tiles(grid, events.t_mid)
    rep = multi_ref_focus(events, dense, warp_mode, n_bins, sigma)
    if not rep.f > 0:
        raise DegenerateInputError(f"focus f = {rep.f} is not positive")
    tv = total_variation(grid)
    return ObjectiveReport(rep.f, rep.g_t1, rep.g_tmid, rep.g_tN, rep.g_zero, tv, 1.0 / rep.f + lam * tv)


def composite_cost_gradient(
    events: EventSlice,
    grid: TileGrid,
    lam: float = 0.0025,
    warp_mode: str = "none",
    n_bins: int = 5,
    sigma: float = 1.0,
    method: str = "analytic",
    step: float = 1e-4,
) -> np.ndarray:
    """Gradient of :func:`composite_cost` with respect to ``grid.uv``.

    ``method="analytic"`` differentiates through interpolation, warping and
    splatting; in time-aware modes the transport is frozen at ``grid`` as
    described in :class:`TileObjective`. ``method="finite-difference"`` uses
    central differences of the full cost, rebuilding the volume each time.
    """
    if method == "analytic":
        obj = TileObjective(events, grid.scale, lam=lam, warp_mode=warp_mode, n_bins=n_bins, sigma=sigma)
        theta = grid.as_vector()
        obj.relinearize(theta)
        return obj.value_and_grad(theta)[1].reshape(grid.uv.shape)
    if method != "finite-difference":
        raise ValueError(f"unknown gradient method {method!r}")
    theta = grid.as_vector()
    out = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        hi = composite_cost(events, TileGrid.from_vector(theta + e, grid.scale, grid.width, grid.height),
                            lam, warp_mode, n_bins, sigma).cost
        lo = composite_cost(events, TileGrid.from_vector(theta - e, grid.scale, grid.width, grid.height),
                            lam, warp_mode, n_bins, sigma).cost
        out[i] = (hi - lo) / (2.0 * step)
    return out.reshape(grid.uv.shape)


class TileObjective:
    """Composite cost of a slice as a function of flat tile parameters.

    ``theta`` is ``TileGrid.uv`` flattened (``2 * S * S`` values). Each event
    reads its velocity as a bilinear combination of four tiles, so the
    per-event weights are precomputed once.

    For time-aware warps call :meth:`relinearize` at an accepted iterate. It
    rebuilds the flow volume there, then freezes the transport: an event
    sampled from a bin at time ``tau`` keeps the transported velocity as an
    offset, and its sensitivity to ``theta`` is read at the foot of its
    characteristic, ``x - (tau - t_mid) * v``, where a change of the boundary
    field would arrive from. Value and gradient stay mutually consistent
    between relinearizations.
    """

    def __init__(self, events: EventSlice, scale: int, *, lam=0.0025, warp_mode="none", n_bins=5, sigma=1.0):
        events.require_events()
        if warp_mode not in SCHEMES:
            raise ValueError(f"unknown warp mode {warp_mode!r}")
        self.events = events
        self.scale = scale
        self.side = tiles_per_side(scale)
        self.lam = float(lam)
        self.warp_mode = warp_mode
        self.n_bins = int(n_bins)
        self.sigma = float(sigma)
        self.t_refs = _reference_times(events)
        self.g_zero = zero_flow_sharpness(events, sigma)
        if not self.g_zero > 0:
            raise DegenerateInputError("zero-flow IWE has no gradient; the focus ratio is undefined")
        self._set_lookup(events.x, events.y)
        self._offset_u = np.zeros(len(events))
        self._offset_v = np.zeros(len(events))
        self.n_evaluations = 0

    @property
    def size(self) -> int:
        return 2 * self.side * self.side

    def grid(self, theta) -> TileGrid:
        return TileGrid.from_vector(theta, self.scale, self.events.width, self.events.height)

    def dense(self, theta) -> DenseFlow:
        return dense_from_tiles(self.grid(theta), self.events.t_mid)

    def _set_lookup(self, px, py):
        s, ev = self.side, self.events
        ylo, yhi, fy = interpolation_weights(pixel_to_tile_coords(py, ev.height, s), s)
        xlo, xhi, fx = interpolation_weights(pixel_to_tile_coords(px, ev.width, s), s)
        self._tile_idx = np.stack([ylo * s + xlo, ylo * s + xhi, yhi * s + xlo, yhi * s + xhi], axis=1)
        self._tile_w = np.stack([(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx], axis=1)

    def _interp(self, plane):
        return np.einsum("nk,nk->n", plane.reshape(-1)[self._tile_idx], self._tile_w)

    def relinearize(self, theta):
        """Rebuild the transported flow at ``theta`` (no-op for ``warp_mode="none"``)."""
        if self.warp_mode == "none":
            return
        ev = self.events
        dense = self.dense(theta)
        volume = build_volume(dense, ev, self.n_bins, self.warp_mode)
        su, sv = volume.sample(ev.x, ev.y, ev.t)
        tau = volume.times[volume.bin_index(ev.t)] - ev.t_mid
        self._offset_u = np.zeros(len(ev))
        self._offset_v = np.zeros(len(ev))
        self._set_lookup(ev.x - tau * su, ev.y - tau * sv)
        uv = np.asarray(theta, dtype=np.float64).reshape(2, self.side, self.side)
        self._offset_u = su - self._interp(uv[0])
        self._offset_v = sv - self._interp(uv[1])

    def _velocities(self, theta):
        uv = np.asarray(theta, dtype=np.float64).reshape(2, self.side, self.side)
        return uv, self._interp(uv[0]) + self._offset_u, self._interp(uv[1]) + self._offset_v

    def report(self, theta) -> ObjectiveReport:
        uv, u, v = self._velocities(theta)
        rep = _focus_from_velocities(self.events, u, v, self.sigma, self.g_zero)
        tv = total_variation(uv)
        cost = _inverse(rep.f) + self.lam * tv
        return ObjectiveReport(rep.f, rep.g_t1, rep.g_tmid, rep.g_tN, rep.g_zero, tv, cost)

    def value(self, theta) -> float:
        return self.report(theta).cost

    def value_and_grad(self, theta):
        self.n_evaluations += 1
        ev = self.events
        uv, u, v = self._velocities(theta)
        df_du = np.zeros(len(ev))
        df_dv = np.zeros(len(ev))
        gs = []
        for wt, t_ref in zip(REF_WEIGHTS, self.t_refs):
            scale = wt / (4.0 * self.g_zero)
            warped = warp_with_velocities(ev, u, v, t_ref)
            img = splat(warped.x, warped.y, ev.width, ev.height, self.sigma)
            gs.append(gradient_magnitude(img))
            gx, gy = splat_position_gradient(warped.x, warped.y, gradient_magnitude_adjoint(img), self.sigma)
            dt = t_ref - ev.t
            df_du += scale * dt * gx
            df_dv += scale * dt * gy
        f = ((gs[0] + gs[2]) + 2.0 * gs[1]) / (4.0 * self.g_zero)
        if not f > 0:
            return float("inf"), np.zeros(uv.size)
        n_tiles = self.side * self.side
        idx = self._tile_idx.reshape(-1)
        dtheta = np.stack([
            np.bincount(idx, weights=(self._tile_w * df_du[:, None]).reshape(-1), minlength=n_tiles),
            np.bincount(idx, weights=(self._tile_w * df_dv[:, None]).reshape(-1), minlength=n_tiles),
        ]).reshape(uv.shape)
        grad = -dtheta / (f * f) + self.lam * total_variation_gradient(uv)
        cost = 1.0 / f + self.lam * total_variation(uv)
        return cost, grad.reshape(-1)


# --------------------------------------------------------------------------- comparison losses


def avg_timestamp_loss(events: EventSlice, flow: DenseFlow, normalized: bool = False, sigma: float = 1.0) -> float:
    """Mean squared per-pixel average timestamp of events warped to ``t_first``.

    Timestamps are measured from ``t_first`` (and divided by the slice span
    when ``normalized``). Each pixel's average is the splat-weighted mean of
    the timestamps landing there; only pixels with splat mass above 1e-3
    count. Returns 0 when no pixel qualifies. Kept for comparison only: it is
    minimized by flows that push events off the sensor.
    """
    events.require_events()
    u, v = _per_event_velocity(events, flow, "none", 1)
    t0 = events.t_first
    tau = events.t - t0
    if normalized:
        span = events.duration
        tau = tau / span if span > 0 else np.zeros_like(tau)
    warped = warp_with_velocities(events, u, v, t0)
    mass = splat(warped.x, warped.y, events.width, events.height, sigma)
    tsum = splat(warped.x, warped.y, events.width, events.height, sigma, weights=tau)
    mask = mass > TIMESTAMP_MASK_MIN
    if not mask.any():
        return 0.0
    avg = tsum[mask] / mass[mask]
    return float(np.mean(avg * avg))
