"""Tile-grid flow parameters and their dense, per-pixel interpolation.

At scale ``l`` the parameters form a ``2**(l-1)`` square grid of 2-D
vectors. Tile ``j`` of an ``S``-tile axis of length ``W`` covers pixels
``floor(j*W/S) <= c < floor((j+1)*W/S)`` and carries its vector at the
coordinate ``(j + 0.5) * W / S``. Pixel ``c`` sits at coordinate ``c``.
Interpolation is bilinear and clamps to the outermost tile centers.

Both the grid-to-pixel and grid-to-grid maps are separable, so they are
expressed as pairs of small 1-D interpolation matrices (see
:func:`interpolation_matrix`); the objective reuses them for its adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import GeometryError


def tiles_per_side(scale: int) -> int:
    if scale < 1:
        raise ValueError(f"scale index must be >= 1, got {scale}")
    return 2 ** (scale - 1)


def interpolation_matrix(coords, n_nodes) -> np.ndarray:
    """Row-stochastic matrix of 1-D linear interpolation weights.

    ``coords`` are positions in node units (node ``j`` at ``j``); positions
    outside ``[0, n_nodes - 1]`` are clamped.
    """
    coords = np.clip(np.asarray(coords, dtype=np.float64), 0.0, n_nodes - 1)
    lo = np.minimum(np.floor(coords).astype(np.int64), max(n_nodes - 2, 0))
    frac = coords - lo
    m = np.zeros((len(coords), n_nodes))
    rows = np.arange(len(coords))
    if n_nodes == 1:
        m[:, 0] = 1.0
        return m
    m[rows, lo] = 1.0 - frac
    m[rows, lo + 1] += frac
    return m


def interpolation_weights(coords, n_nodes):
    """Sparse form of :func:`interpolation_matrix`: ``(lo, hi, frac)`` per coordinate.

    The interpolated value is ``(1 - frac) * node[lo] + frac * node[hi]``.
    """
    coords = np.clip(np.asarray(coords, dtype=np.float64), 0.0, n_nodes - 1)
    lo = np.minimum(np.floor(coords).astype(np.int64), max(n_nodes - 2, 0))
    hi = np.minimum(lo + 1, n_nodes - 1)
    return lo, hi, coords - lo


def pixel_to_tile_coords(coords, n_pixels, n_tiles):
    """Pixel coordinates expressed in tile-center units (center ``j`` at ``j``)."""
    return np.asarray(coords, dtype=np.float64) * n_tiles / n_pixels - 0.5


def pixel_interpolation_matrix(n_pixels, n_tiles) -> np.ndarray:
    """Weights mapping ``n_tiles`` tile-center values to ``n_pixels`` pixels."""
    pitch = n_pixels / n_tiles
    return interpolation_matrix(np.arange(n_pixels) / pitch - 0.5, n_tiles)


def tile_boundaries(n_pixels, n_tiles) -> np.ndarray:
    """Footprint edges ``floor(k * n_pixels / n_tiles)`` for ``k = 0..n_tiles``."""
    return (np.arange(n_tiles + 1) * n_pixels) // n_tiles


def _frozen_float(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TileGrid:
    """Flow parameters at one pyramid scale.

    ``uv`` has shape ``(2, S, S)`` with ``S = 2**(scale-1)``; ``uv[0]`` is the
    horizontal component and rows run top to bottom. Units are px/s.
    """

    scale: int
    uv: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "uv", _frozen_float(self.uv))
        s = tiles_per_side(self.scale)
        if self.uv.shape != (2, s, s):
            raise GeometryError(f"scale {self.scale} needs uv of shape (2, {s}, {s}), got {self.uv.shape}")
        if not np.all(np.isfinite(self.uv)):
            raise ValueError("tile grid contains non-finite values")

    @classmethod
    def zeros(cls, scale, width, height) -> "TileGrid":
        s = tiles_per_side(scale)
        return cls(scale, np.zeros((2, s, s)), width, height)

    @classmethod
    def constant(cls, vector, scale, width, height) -> "TileGrid":
        s = tiles_per_side(scale)
        uv = np.empty((2, s, s))
        uv[0], uv[1] = vector
        return cls(scale, uv, width, height)

    @classmethod
    def from_vector(cls, theta, scale, width, height) -> "TileGrid":
        s = tiles_per_side(scale)
        return cls(scale, np.asarray(theta, dtype=np.float64).reshape(2, s, s), width, height)

    @property
    def side(self) -> int:
        return self.uv.shape[1]

    @property
    def u(self):
        return self.uv[0]

    @property
    def v(self):
        return self.uv[1]

    def as_vector(self) -> np.ndarray:
        return self.uv.reshape(-1).copy()


@dataclass(frozen=True, eq=False)
class DenseFlow:
    """Per-pixel flow ``uv`` of shape ``(2, height, width)`` defined at ``t_ref``."""

    uv: np.ndarray
    t_ref: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "uv", _frozen_float(self.uv))
        if self.uv.ndim != 3 or self.uv.shape[0] != 2:
            raise GeometryError(f"dense flow needs shape (2, H, W), got {self.uv.shape}")
        if not np.all(np.isfinite(self.uv)):
            raise ValueError("dense flow contains non-finite values")
        object.__setattr__(self, "t_ref", float(self.t_ref))

    @classmethod
    def constant(cls, vector, width, height, t_ref=0.0) -> "DenseFlow":
        uv = np.empty((2, height, width))
        uv[0], uv[1] = vector
        return cls(uv, t_ref)

    @classmethod
    def zeros(cls, width, height, t_ref=0.0) -> "DenseFlow":
        return cls(np.zeros((2, height, width)), t_ref)

    @classmethod
    def from_components(cls, u, v, t_ref=0.0) -> "DenseFlow":
        return cls(np.stack([np.asarray(u, float), np.asarray(v, float)]), t_ref)

    @property
    def width(self) -> int:
        return self.uv.shape[2]

    @property
    def height(self) -> int:
        return self.uv.shape[1]

    @property
    def u(self):
        return self.uv[0]

    @property
    def v(self):
        return self.uv[1]

    def scaled(self, factor) -> "DenseFlow":
        """Flow multiplied by ``factor`` (e.g. px/s times seconds gives px)."""
        return DenseFlow(self.uv * factor, self.t_ref)


def dense_from_tiles(grid: TileGrid, t_ref=0.0) -> DenseFlow:
    """Bilinearly interpolate tile-center vectors to every pixel."""
    ay = pixel_interpolation_matrix(grid.height, grid.side)
    ax = pixel_interpolation_matrix(grid.width, grid.side)
    uv = np.einsum("hs,cst,wt->chw", ay, grid.uv, ax)
    return DenseFlow(uv, t_ref)


def _upsample_matrix(n_coarse):
    # New center j of 2S tiles lies at (j + 0.5) / 2 - 0.5 in coarse node units.
    j = np.arange(2 * n_coarse)
    return interpolation_matrix((j + 0.5) / 2.0 - 0.5, n_coarse)


def upsample_tile_grid(grid: TileGrid) -> TileGrid:
    """Tile grid at ``scale + 1`` sampled bilinearly from ``grid``."""
    m = _upsample_matrix(grid.side)
    uv = np.einsum("is,cst,jt->cij", m, grid.uv, m)
    return TileGrid(grid.scale + 1, uv, grid.width, grid.height)


def downsample_flow_to_tiles(flow: DenseFlow, scale: int) -> TileGrid:
    """Average a dense field over each tile footprint at ``scale``."""
    s = tiles_per_side(scale)
    if s > flow.width or s > flow.height:
        raise GeometryError(f"{s}x{s} tiles do not fit a {flow.width}x{flow.height} frame")
    bx = tile_boundaries(flow.width, s)
    by = tile_boundaries(flow.height, s)
    sums = np.add.reduceat(np.add.reduceat(flow.uv, by[:-1], axis=1), bx[:-1], axis=2)
    counts = np.outer(np.diff(by), np.diff(bx))
    return TileGrid(scale, sums / counts, flow.width, flow.height)


def init_next_slice(prev_finest: DenseFlow, scale: int, coarse_upsampled: TileGrid | None = None) -> TileGrid:
    """Warm-start tiles for a new slice from the previous slice's finest flow.

    At the coarsest scale (``coarse_upsampled`` absent) this is the footprint
    mean of ``prev_finest``; at finer scales it is the average of that mean and
    the upsampled coarse solution of the current slice.
    """
    prev = downsample_flow_to_tiles(prev_finest, scale)
    if coarse_upsampled is None:
        return prev
    if coarse_upsampled.scale != scale:
        raise GeometryError(f"upsampled grid is at scale {coarse_upsampled.scale}, expected {scale}")
    return TileGrid(scale, 0.5 * (prev.uv + coarse_upsampled.uv), prev.width, prev.height)
