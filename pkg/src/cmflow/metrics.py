"""Flow accuracy and motion-compensation quality measures.

Endpoint errors are computed on displacement fields (pixels over the
evaluation interval). Solver output is in px/s; convert it with
:func:`to_displacement` first.
"""

from __future__ import annotations

import numpy as np

from .events import EventSlice
from .exceptions import GeometryError, UndefinedMetricError
from .flowrep import DenseFlow
from .objective import _per_event_velocity, image_variance
from .pde import SCHEMES, FlowVolume
from .warp import splat, warp_with_velocities

OUTLIER_THRESHOLD = 3.0


def to_displacement(flow: DenseFlow, interval: float) -> DenseFlow:
    """Velocity (px/s) times ``interval`` seconds."""
    if not interval >= 0:
        raise ValueError("interval must be non-negative")
    return flow.scaled(interval)


def eval_mask(events: EventSlice, gt_valid=None) -> np.ndarray:
    """Pixels with at least one event and (optionally) valid ground truth."""
    mask = events.event_count_image() > 0
    if gt_valid is not None:
        gt_valid = np.asarray(gt_valid, dtype=bool)
        if gt_valid.shape != mask.shape:
            raise GeometryError(f"validity map {gt_valid.shape} does not match frame {mask.shape}")
        mask &= gt_valid
    return mask


def gt_valid_mask(gt: DenseFlow) -> np.ndarray:
    """Finite, not-all-zero ground truth; zero vectors conventionally mark missing data."""
    return np.all(np.isfinite(gt.uv), axis=0) & np.any(gt.uv != 0, axis=0)


def endpoint_errors(pred: DenseFlow, gt: DenseFlow) -> np.ndarray:
    if pred.uv.shape != gt.uv.shape:
        raise GeometryError(f"prediction {pred.uv.shape} and ground truth {gt.uv.shape} differ in shape")
    return np.hypot(pred.u - gt.u, pred.v - gt.v)


def aee_and_outliers(pred: DenseFlow, gt: DenseFlow, mask, outlier_threshold: float = OUTLIER_THRESHOLD):
    """Average endpoint error and percentage of masked pixels with error > threshold.

    Both fields are displacements in pixels. The outlier test is strict.

    Returns
    -------
    (float, float)
        AEE in pixels and %Out in percent.
    """
    err = endpoint_errors(pred, gt)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != err.shape:
        raise GeometryError(f"mask {mask.shape} does not match flow {err.shape}")
    if not mask.any():
        raise UndefinedMetricError("evaluation mask is empty")
    sel = err[mask]
    return float(sel.mean()), float(100.0 * np.mean(sel > outlier_threshold))


def _iwe_variance_at_mid(events, u, v, sigma):
    w = warp_with_velocities(events, u, v, events.t_mid)
    return image_variance(splat(w.x, w.y, events.width, events.height, sigma))


def fwl(events: EventSlice, flow, warp_mode: str = "none", n_bins: int = 5, sigma: float = 1.0) -> float:
    """Flow warp loss: IWE variance at ``t_mid`` relative to the unwarped IWE.

    ``flow`` is a velocity field (px/s) or a :class:`FlowVolume`. Values
    above one mean the flow sharpens the events.
    """
    events.require_events()
    if warp_mode not in SCHEMES:
        raise ValueError(f"unknown warp mode {warp_mode!r}")
    zero = np.zeros(len(events))
    base = _iwe_variance_at_mid(events, zero, zero, sigma)
    if not base > 0:
        raise UndefinedMetricError("identity IWE has zero variance")
    u, v = _per_event_velocity(events, flow, warp_mode, n_bins)
    return _iwe_variance_at_mid(events, u, v, sigma) / base
