"""scikit-learn style wrapper around the multi-scale solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_events
from .objective import _per_event_velocity, multi_ref_focus
from .solver import SolveConfig, solve_multiscale
from .warp import warp_with_velocities


class ContrastMaximizationFlow(BaseEstimator):
    """Dense optical flow for one event slice by focus maximization.

    ``X`` is an :class:`~cmflow.events.EventSlice` or an ``(n_events, 4)``
    array of ``t, x, y, p`` rows (then ``width`` and ``height`` are needed).

    Parameters
    ----------
    width, height : int, optional
        Sensor size, used when events arrive as arrays.
    n_scales : int, default=5
        Number of tile-pyramid levels; the finest has ``2**(n_scales-1)`` tiles per side.
    lam : float, default=0.0025
        Weight of the tile-grid total variation.
    max_iters_per_scale : int, default=20
    warp_mode : {"none", "upwind", "burgers"}, default="none"
        How the flow varies in time within the slice.
    n_bins : int, default=5
        Time bins for the time-aware modes.
    sigma : float, default=1.0
        Splat width in pixels.
    tol : float, default=1e-6
        Stop a scale when the cost decreases by less than this.

    Attributes
    ----------
    flow_ : DenseFlow
        Per-pixel velocity (px/s) at the fitted slice's mid time.
    grid_ : TileGrid
        Finest-scale parameters.
    focus_ : float
        Focus value of the fitted flow on the training slice.
    n_iter_ : list of int
        Accepted iterations per scale.
    """

    def __init__(
        self,
        width=None,
        height=None,
        n_scales=5,
        lam=0.0025,
        max_iters_per_scale=20,
        warp_mode="none",
        n_bins=5,
        sigma=1.0,
        tol=1e-6,
    ):
        self.width = width
        self.height = height
        self.n_scales = n_scales
        self.lam = lam
        self.max_iters_per_scale = max_iters_per_scale
        self.warp_mode = warp_mode
        self.n_bins = n_bins
        self.sigma = sigma
        self.tol = tol

    def _config(self) -> SolveConfig:
        return SolveConfig(
            n_scales=self.n_scales,
            lam=self.lam,
            max_iters_per_scale=self.max_iters_per_scale,
            warp_mode=self.warp_mode,
            n_bins=self.n_bins,
            sigma=self.sigma,
            tol=self.tol,
        )

    def _fit(self, events, warm):
        result = solve_multiscale(events, self._config(), warm_start=warm)
        self.flow_ = result.dense
        self.grid_ = result.finest_grid
        self.focus_ = result.report.f
        self.n_iter_ = list(result.iterations)
        self.sensor_shape_ = events.shape
        return self

    def fit(self, X, y=None):
        """Estimate flow on ``X`` from a zero initialization."""
        return self._fit(check_events(X, self.width, self.height), None)

    def partial_fit(self, X, y=None):
        """Estimate flow on the next slice, warm-started from the current fit."""
        events = check_events(X, self.width, self.height)
        warm = getattr(self, "flow_", None)
        if warm is not None and events.shape != self.sensor_shape_:
            warm = None
        return self._fit(events, warm)

    def _velocities(self, events):
        check_is_fitted(self, "flow_")
        if events.shape != self.sensor_shape_:
            raise ValueError(f"fitted for a {self.sensor_shape_} sensor, got events of shape {events.shape}")
        return _per_event_velocity(events, self.flow_, self.warp_mode, self.n_bins)

    def predict(self, X) -> np.ndarray:
        """Velocity (px/s) assigned to each event, shape ``(n_events, 2)``.

        Array input is reordered by timestamp, as everywhere else.
        """
        events = check_events(X, self.width, self.height)
        u, v = self._velocities(events)
        return np.column_stack([u, v])

    def transform(self, X, t_ref=None) -> np.ndarray:
        """Motion-compensated event positions at ``t_ref`` (default: the slice mid time)."""
        events = check_events(X, self.width, self.height)
        u, v = self._velocities(events)
        w = warp_with_velocities(events, u, v, events.t_mid if t_ref is None else t_ref)
        return np.column_stack([w.x, w.y])

    def score(self, X, y=None) -> float:
        """Focus of the fitted flow on ``X``; 1 means no sharpening over zero flow."""
        check_is_fitted(self, "flow_")
        events = check_events(X, self.width, self.height)
        return multi_ref_focus(events, self.flow_, self.warp_mode, self.n_bins, self.sigma).f
