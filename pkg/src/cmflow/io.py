"""File formats: Middlebury ``.flo`` flow, PGM/PPM images and a flow color wheel."""

from __future__ import annotations

import os

import numpy as np

from .flowrep import DenseFlow
from .warp import Iwe

FLO_MAGIC = b"PIEH"


def write_flo(flow: DenseFlow, path) -> None:
    """Write ``flow`` (displacement, px) as a little-endian Middlebury file."""
    if not np.all(np.isfinite(flow.uv)):
        raise ValueError("cannot write a non-finite flow field")
    body = np.stack([flow.u, flow.v], axis=-1).astype("<f4")
    header = np.array([flow.width, flow.height], dtype="<i4")
    try:
        with open(path, "wb") as fh:
            fh.write(FLO_MAGIC)
            fh.write(header.tobytes())
            fh.write(body.tobytes())
    except OSError as exc:
        raise OSError(f"failed to write flow file {os.fspath(path)!r}: {exc.strerror}") from exc


def read_flo(path) -> DenseFlow:
    with open(path, "rb") as fh:
        data = fh.read()
    # "PIEH" is also the little-endian float 202021.25 some writers emit
    if len(data) < 12 or data[:4] != FLO_MAGIC:
        raise ValueError(f"{os.fspath(path)!r} is not a .flo file")
    width, height = (int(v) for v in np.frombuffer(data[4:12], "<i4"))
    if width < 1 or height < 1:
        raise ValueError(f"{os.fspath(path)!r}: invalid size {width}x{height}")
    expected = 12 + 8 * width * height
    if len(data) != expected:
        raise ValueError(f"{os.fspath(path)!r}: expected {expected} bytes, found {len(data)}")
    uv = np.frombuffer(data[12:], "<f4").reshape(height, width, 2).astype(np.float64)
    return DenseFlow(np.moveaxis(uv, -1, 0))


def _write_netpbm(path, magic: bytes, pixels: np.ndarray) -> None:
    height, width = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (width, height))
        fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def iwe_to_gray(iwe) -> np.ndarray:
    img = iwe.values if isinstance(iwe, Iwe) else np.asarray(iwe, dtype=np.float64)
    if img.size == 0:
        raise ValueError("empty image")
    peak = float(img.max())
    if peak <= 0:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.rint(np.clip(img, 0, None) * (255.0 / peak)).astype(np.uint8)


def write_iwe_image(iwe, path) -> None:
    """Binary PGM (P5) of ``iwe`` scaled so its maximum maps to 255."""
    _write_netpbm(path, b"P5", iwe_to_gray(iwe))


def write_ppm(rgb, path) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("expected an (H, W, 3) uint8 image")
    _write_netpbm(path, b"P6", rgb)


def _hsv_to_rgb(h, s, v):
    # h in [0, 1); vectorized version of colorsys.hsv_to_rgb
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    out = np.empty(h.shape + (3,))
    for k, (r, g, b) in enumerate(choices):
        sel = i == k
        out[sel, 0] = np.broadcast_to(r, h.shape)[sel]
        out[sel, 1] = np.broadcast_to(g, h.shape)[sel]
        out[sel, 2] = np.broadcast_to(b, h.shape)[sel]
    return out


def render_flow_color(flow: DenseFlow) -> np.ndarray:
    """Color-wheel rendering: hue is direction, saturation is relative magnitude.

    Magnitudes are divided by their 99th percentile and clamped to 1; value is
    fixed at 1, so zero flow is white.
    """
    if not np.all(np.isfinite(flow.uv)):
        raise ValueError("cannot render a non-finite flow field")
    mag = np.hypot(flow.u, flow.v)
    scale = float(np.percentile(mag, 99))
    sat = np.clip(mag / scale, 0.0, 1.0) if scale > 0 else np.zeros_like(mag)
    hue = np.mod(np.arctan2(flow.v, flow.u) / (2.0 * np.pi), 1.0)
    rgb = _hsv_to_rgb(hue, sat, np.ones_like(mag))
    return np.rint(rgb * 255.0).astype(np.uint8)
