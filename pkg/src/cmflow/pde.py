"""Time-aware flow: transport a flow field along its own streamlines.

The field ``v = (vx, vy)`` obeys ``dv/dt + (v . grad) v = 0``. It is given at
``t_mid`` and integrated to other times with explicit first-order schemes on
the pixel lattice (``dx = dy = 1``):

* ``upwind``: one-sided differences taken on the side the flow comes from;
* ``burgers``: the self-advection terms ``vx d(vx)/dx`` and ``vy d(vy)/dy``
  use the conservative Engquist-Osher flux difference, the cross terms stay
  upwind.

Frame borders replicate the edge value (zero normal gradient). Integration
backward in time advances ``-v`` forward and negates the result, which flips
the upwind side as required.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .events import EventSlice
from .exceptions import StabilityError
from .flowrep import DenseFlow

SCHEMES = ("none", "upwind", "burgers")
CFL_SAFETY = 0.9


def cfl_max_dt(flow: DenseFlow, dx=1.0, dy=1.0) -> float:
    """Largest stable step, ``0.9 / max(|vx|/dx + |vy|/dy)``; ``inf`` for zero flow."""
    rate = float(np.max(np.abs(flow.u) / dx + np.abs(flow.v) / dy))
    if rate == 0.0:
        return math.inf
    return CFL_SAFETY / rate


def _neighbors(w, axis):
    """Values at ``i - 1`` and ``i + 1`` along ``axis`` with edge replication."""
    if axis == 1:
        prev = np.concatenate([w[:, :1], w[:, :-1]], axis=1)
        nxt = np.concatenate([w[:, 1:], w[:, -1:]], axis=1)
    else:
        prev = np.concatenate([w[:1], w[:-1]], axis=0)
        nxt = np.concatenate([w[1:], w[-1:]], axis=0)
    return prev, nxt


def _upwind_diff(w, speed, axis):
    prev, nxt = _neighbors(w, axis)
    return np.where(speed > 0, w - prev, nxt - w)


def _burgers_flux(w, axis):
    # Engquist-Osher: 0.5 * (sign(w) w^2 + F - B)
    prev, nxt = _neighbors(w, axis)
    fwd = np.where(nxt < 0, nxt * nxt, 0.0)
    bwd = np.where(prev > 0, prev * prev, 0.0)
    return 0.5 * (np.sign(w) * w * w + fwd - bwd)


def _step(vx, vy, dt, scheme):
    """One forward explicit step (``dt > 0``)."""
    if scheme == "upwind":
        self_x = vx * _upwind_diff(vx, vx, axis=1)
        self_y = vy * _upwind_diff(vy, vy, axis=0)
    else:
        self_x = _burgers_flux(vx, axis=1)
        self_y = _burgers_flux(vy, axis=0)
    cross_x = vy * _upwind_diff(vx, vy, axis=0)
    cross_y = vx * _upwind_diff(vy, vx, axis=1)
    return vx - dt * (self_x + cross_x), vy - dt * (self_y + cross_y)


def _propagate(boundary: DenseFlow, t_mid, t_target, n_substeps, scheme) -> DenseFlow:
    if scheme not in ("upwind", "burgers"):
        raise ValueError(f"unknown scheme {scheme!r}")
    span = float(t_target) - float(t_mid)
    if span == 0.0:
        return DenseFlow(boundary.uv, t_target)
    n_substeps = int(n_substeps)
    if n_substeps < 1:
        raise ValueError("n_substeps must be >= 1")
    dt = abs(span) / n_substeps
    sign = 1.0 if span > 0 else -1.0
    vx = sign * np.array(boundary.u, dtype=np.float64)
    vy = sign * np.array(boundary.v, dtype=np.float64)
    for step in range(n_substeps):
        courant = dt * float(np.max(np.abs(vx) + np.abs(vy)))
        if not courant < 1.0:
            raise StabilityError(
                f"CFL violated at sub-step {step}: dt*max(|vx|+|vy|) = {courant:.4g} >= 1", step=step
            )
        vx, vy = _step(vx, vy, dt, scheme)
        if not (np.all(np.isfinite(vx)) and np.all(np.isfinite(vy))):
            raise StabilityError(f"non-finite flow after sub-step {step}", step=step)
    return DenseFlow(np.stack([sign * vx, sign * vy]), t_target)


def propagate_upwind(boundary: DenseFlow, t_mid, t_target, n_substeps) -> DenseFlow:
    """Transport ``boundary`` from ``t_mid`` to ``t_target`` with the upwind scheme."""
    return _propagate(boundary, t_mid, t_target, n_substeps, "upwind")


def propagate_burgers(boundary: DenseFlow, t_mid, t_target, n_substeps) -> DenseFlow:
    """Transport ``boundary`` with conservative fluxes for the self-advection terms."""
    return _propagate(boundary, t_mid, t_target, n_substeps, "burgers")


def auto_substeps(flow: DenseFlow, span) -> int:
    """Sub-steps needed to cover ``|span|`` seconds within the CFL bound.

    Uses ``max|vx| + max|vy|``, which bounds the pointwise rate for every
    later sub-step too: both schemes are monotone, so neither component's
    extremes grow.
    """
    rate = float(np.max(np.abs(flow.u)) + np.max(np.abs(flow.v)))
    if rate == 0.0:
        return 1
    return max(1, math.ceil(abs(span) * rate / CFL_SAFETY))


@dataclass(frozen=True, eq=False)
class FlowVolume:
    """Time-binned flow ``bins[k]`` (shape ``(n_bins, 2, H, W)``) over ``[t_start, t_end]``.

    Bin ``k`` covers ``[edges[k], edges[k+1])`` (the last bin also holds
    ``t_end``); ``times[k]`` is the instant its field represents.
    """

    bins: np.ndarray
    times: np.ndarray
    t_start: float
    t_end: float
    scheme: str = "none"

    def __post_init__(self):
        bins = np.array(self.bins, dtype=np.float64)
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=np.float64))
        if bins.ndim != 4 or bins.shape[1] != 2 or bins.shape[0] < 1:
            raise ValueError(f"bins must have shape (n, 2, H, W), got {bins.shape}")
        if not np.all(np.isfinite(bins)):
            raise StabilityError("flow volume contains non-finite values")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def n_bins(self) -> int:
        return self.bins.shape[0]

    @property
    def width(self) -> int:
        return self.bins.shape[3]

    @property
    def height(self) -> int:
        return self.bins.shape[2]

    @property
    def edges(self) -> np.ndarray:
        return self.t_start + (self.t_end - self.t_start) * np.arange(self.n_bins + 1) / self.n_bins

    def bin_index(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < self.t_start) or np.any(t > self.t_end):
            raise ValueError(f"time outside the volume span [{self.t_start}, {self.t_end}]")
        idx = np.searchsorted(self.edges, t, side="right") - 1
        return np.clip(idx, 0, self.n_bins - 1)

    def sample(self, x, y, t):
        """Velocity ``(u, v)`` of the bin containing ``t`` at integer pixel ``(x, y)``."""
        k = self.bin_index(t)
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        return self.bins[k, 0, y, x], self.bins[k, 1, y, x]

    def field(self, k) -> DenseFlow:
        return DenseFlow(self.bins[k], self.times[k])


def sample_flow(volume: FlowVolume, x, y, t):
    return volume.sample(x, y, t)


def build_volume(boundary: DenseFlow, events: EventSlice, n_bins: int, scheme: str = "upwind") -> FlowVolume:
    """Spread ``boundary`` (defined at the slice's ``t_mid``) over ``n_bins`` time bins.

    The bin containing ``t_mid`` holds ``boundary``; every other bin is
    transported from its neighbor towards the slice ends, with the sub-step
    count chosen from the CFL bound of the field being advanced.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    t0, t1, tm = events.t_first, events.t_last, events.t_mid
    edges = t0 + (t1 - t0) * np.arange(n_bins + 1) / n_bins
    times = 0.5 * (edges[:-1] + edges[1:])
    mid = int(np.clip(np.searchsorted(edges, tm, side="right") - 1, 0, n_bins - 1))
    times[mid] = tm

    fields = [None] * n_bins
    fields[mid] = boundary.uv
    if scheme == "none" or n_bins == 1:
        for k in range(n_bins):
            fields[k] = boundary.uv
    else:
        step = propagate_upwind if scheme == "upwind" else propagate_burgers
        for order in (range(mid + 1, n_bins), range(mid - 1, -1, -1)):
            prev = mid
            for k in order:
                src = DenseFlow(fields[prev], times[prev])
                span = times[k] - times[prev]
                fields[k] = step(src, times[prev], times[k], auto_substeps(src, span)).uv
                prev = k
    return FlowVolume(np.stack(fields), times, t0, t1, scheme)
