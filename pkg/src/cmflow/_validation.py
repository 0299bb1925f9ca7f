"""Input coercion shared by the estimator and scripts."""

from __future__ import annotations

import numpy as np

from .events import EventSlice
from .exceptions import GeometryError


def check_events(X, width=None, height=None) -> EventSlice:
    """Coerce ``X`` to a non-empty :class:`EventSlice`.

    Parameters
    ----------
    X : EventSlice or array-like of shape (n_events, 4)
        Either a slice, or rows of ``(t, x, y, p)``. Rows need not be sorted.
    width, height : int, optional
        Sensor size. Required for arrays; checked against a slice.
    """
    if isinstance(X, EventSlice):
        if width is not None and (X.width, X.height) != (width, height):
            raise GeometryError(f"events come from a {X.width}x{X.height} sensor, expected {width}x{height}")
        return X.require_events()
    if width is None or height is None:
        raise ValueError("width and height are required when events are given as an array")
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected an (n_events, 4) array of t, x, y, p; got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("no events")
    if not np.all(np.isfinite(arr)):
        raise ValueError("events contain NaN or infinity")
    xy = arr[:, 1:3]
    if np.any(xy != np.round(xy)):
        raise ValueError("pixel coordinates must be integers")
    return EventSlice.from_arrays(
        arr[:, 1].astype(np.int64),
        arr[:, 2].astype(np.int64),
        arr[:, 0],
        arr[:, 3].astype(np.int64),
        width=int(width),
        height=int(height),
    ).require_events()
