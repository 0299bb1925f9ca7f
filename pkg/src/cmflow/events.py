"""Event containers, text I/O, slicing and the synthetic constant-motion scene.

Events are stored column-wise (one numpy array per field) because every
downstream consumer is vectorized; :class:`Event` only exists for
record-at-a-time access.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .exceptions import EmptySliceError, EventParseError

logger = logging.getLogger(__name__)


class Event(NamedTuple):
    x: int
    y: int
    t: float
    p: int


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EventSlice:
    """A time-ordered batch of events on a ``width`` x ``height`` sensor.

    Use :meth:`from_arrays` to build a slice from unsorted or unchecked data;
    the plain constructor validates but does not reorder.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x, np.int64))
        object.__setattr__(self, "y", _frozen(self.y, np.int64))
        object.__setattr__(self, "t", _frozen(self.t, np.float64))
        object.__setattr__(self, "p", _frozen(self.p, np.int8))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event field arrays differ in length")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid sensor size {self.width}x{self.height}")
        if n:
            if self.x.min() < 0 or self.x.max() >= self.width:
                raise ValueError("event x outside [0, width)")
            if self.y.min() < 0 or self.y.max() >= self.height:
                raise ValueError("event y outside [0, height)")
            if not np.all(np.isfinite(self.t)):
                raise ValueError("non-finite timestamp")
            if np.any(np.diff(self.t) < 0):
                raise ValueError("timestamps must be non-decreasing; use EventSlice.from_arrays")
            if not np.all(np.abs(self.p) == 1):
                raise ValueError("polarity must be -1 or +1")

    @classmethod
    def from_arrays(cls, x, y, t, p=None, *, width, height) -> "EventSlice":
        """Build a slice, remapping polarity 0 to -1 and stable-sorting by time."""
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        if p is None:
            p = np.ones_like(t, dtype=np.int8)
        p = np.asarray(p).reshape(-1).astype(np.int8)
        p = np.where(p == 0, -1, p)
        order = np.argsort(t, kind="stable")
        return cls(
            np.asarray(x)[order], np.asarray(y)[order], t[order], p[order],
            width=width, height=height,
        )

    @classmethod
    def empty(cls, width, height) -> "EventSlice":
        return cls([], [], [], [], width=width, height=height)

    def __len__(self):
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield Event(int(self.x[i]), int(self.y[i]), float(self.t[i]), int(self.p[i]))

    def __getitem__(self, index) -> "EventSlice":
        if isinstance(index, (int, np.integer)):
            index = slice(index, index + 1 if index != -1 else None)
        return EventSlice(
            self.x[index], self.y[index], self.t[index], self.p[index],
            width=self.width, height=self.height,
        )

    def require_events(self) -> "EventSlice":
        if len(self) == 0:
            raise EmptySliceError("event slice is empty")
        return self

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def t_first(self) -> float:
        self.require_events()
        return float(self.t[0])

    @property
    def t_last(self) -> float:
        self.require_events()
        return float(self.t[-1])

    @property
    def t_mid(self) -> float:
        return 0.5 * (self.t_first + self.t_last)

    @property
    def duration(self) -> float:
        return self.t_last - self.t_first

    def event_count_image(self) -> np.ndarray:
        """Per-pixel event counts, shape ``(height, width)``."""
        flat = np.bincount(self.y * self.width + self.x, minlength=self.width * self.height)
        return flat.reshape(self.height, self.width)


# --------------------------------------------------------------------------- text I/O


def _parse_line(line, lineno, path):
    fields = line.split()
    if len(fields) != 4:
        raise EventParseError(f"expected 4 fields 't x y p', got {len(fields)}", lineno, path)
    try:
        t = float(fields[0])
        xf = float(fields[1])
        yf = float(fields[2])
        pf = float(fields[3])
    except ValueError as exc:
        raise EventParseError(f"unparsable number ({exc})", lineno, path) from None
    if not np.isfinite(t):
        raise EventParseError("non-finite timestamp", lineno, path)
    for name, v in (("x", xf), ("y", yf)):
        if not float(v).is_integer():
            raise EventParseError(f"{name} must be an integer, got {v!r}", lineno, path)
    if pf not in (-1.0, 0.0, 1.0):
        raise EventParseError(f"polarity must be 0, 1 or -1, got {fields[3]!r}", lineno, path)
    return t, int(xf), int(yf), int(pf)


def parse_events_text(lines, width, height, *, path=None):
    """Parse ``t x y p`` records.

    Returns
    -------
    events : EventSlice
    n_dropped : int
        Number of records rejected for lying outside the sensor.
    """
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rows.append(_parse_line(line, lineno, path))
    if rows:
        t, x, y, p = (np.array(c) for c in zip(*rows))
    else:
        t = np.empty(0)
        x = y = p = np.empty(0, dtype=np.int64)
    inside = (x >= 0) & (x < width) & (y >= 0) & (y < height)
    n_dropped = int(np.count_nonzero(~inside))
    if rows and not inside.any():
        raise EmptySliceError(f"all {len(rows)} events fall outside the {width}x{height} sensor")
    if not rows:
        raise EmptySliceError("no events in input")
    events = EventSlice.from_arrays(x[inside], y[inside], t[inside], p[inside], width=width, height=height)
    return events, n_dropped


def load_events_text(path, width, height) -> EventSlice:
    """Load an event text file (one ``t x y p`` record per line, ``#`` comments).

    Out-of-bounds events are dropped with a warning. Polarity 0 maps to -1 and
    unsorted input is stable-sorted by timestamp.
    """
    with open(path, "r", encoding="utf-8") as fh:
        events, n_dropped = parse_events_text(fh, width, height, path=os.fspath(path))
    if n_dropped:
        logger.warning("event=dropped_out_of_bounds count=%d path=%s", n_dropped, path)
    return events


def write_events_text(events: EventSlice, path) -> None:
    """Write events as ``t x y p`` lines; timestamps keep full double precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for t, x, y, p in zip(events.t.tolist(), events.x.tolist(), events.y.tolist(), events.p.tolist()):
            fh.write(f"{t!r} {x} {y} {p}\n")


# --------------------------------------------------------------------------- slicing


def slice_by_count(stream: EventSlice, n: int, keep_remainder: bool = False) -> list[EventSlice]:
    """Split ``stream`` into consecutive, non-overlapping slices of ``n`` events."""
    if n < 1:
        raise ValueError(f"slice size must be >= 1, got {n}")
    total = len(stream)
    stops = list(range(n, total + 1, n))
    starts = [s - n for s in stops]
    if keep_remainder and total % n:
        starts.append(total - total % n)
        stops.append(total)
    return [stream[a:b] for a, b in zip(starts, stops)]


# --------------------------------------------------------------------------- synthetic scenes


def generate_linear_motion_events(
    pattern,
    v_true,
    duration,
    rate,
    *,
    seed=0,
    t0=0.0,
):
    """Events from a binary pattern translating at constant velocity.

    Every active pixel of ``pattern`` (shape ``(height, width)``) emits
    ``rate`` events with timestamps uniform in ``[t0, t0 + duration]``, placed
    on the line ``x(t) = x0 + (t - t0) * v_true`` and rounded to the nearest
    pixel. Events that leave the sensor are discarded.

    Returns
    -------
    events : EventSlice
    gt : DenseFlow
        The constant ground-truth field ``v_true`` in px/s.
    """
    from .flowrep import DenseFlow

    pattern = np.asarray(pattern, dtype=bool)
    if pattern.ndim != 2 or not pattern.any():
        raise ValueError("pattern must be a non-empty 2-D binary image")
    if duration <= 0:
        raise ValueError("duration must be positive")
    rate = int(rate)
    if rate < 1:
        raise ValueError("rate must be >= 1")
    height, width = pattern.shape
    vx, vy = (float(c) for c in v_true)
    rng = np.random.default_rng(seed)

    ys0, xs0 = np.nonzero(pattern)
    dt = rng.uniform(0.0, duration, size=(len(xs0), rate))
    xs = np.rint(xs0[:, None] + dt * vx).astype(np.int64)
    ys = np.rint(ys0[:, None] + dt * vy).astype(np.int64)
    pol = np.where(rng.random(size=dt.shape) < 0.5, -1, 1)
    inside = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
    if not inside.any():
        raise EmptySliceError("every synthetic trajectory leaves the sensor")
    events = EventSlice.from_arrays(
        xs[inside], ys[inside], t0 + dt[inside], pol[inside], width=width, height=height
    )
    gt = DenseFlow.constant((vx, vy), width, height, t_ref=t0 + 0.5 * duration)
    return events, gt


def dot_pattern(width, height, n_dots, *, margin=(0, 0, 0, 0), seed=0):
    """Binary image with ``n_dots`` distinct active pixels.

    ``margin`` is ``(left, right, top, bottom)`` in pixels kept free of dots,
    so that a translating pattern stays inside the sensor.
    """
    left, right, top, bottom = margin
    xs = np.arange(left, width - right)
    ys = np.arange(top, height - bottom)
    cells = len(xs) * len(ys)
    if n_dots > cells:
        raise ValueError("more dots requested than available pixels")
    rng = np.random.default_rng(seed)
    pick = rng.choice(cells, size=n_dots, replace=False)
    out = np.zeros((height, width), dtype=bool)
    out[ys[pick // len(xs)], xs[pick % len(xs)]] = True
    return out


def oracle_scene(
    *,
    width=64,
    height=64,
    velocity=(8.0, 0.0),
    duration=1.0,
    n_events=5000,
    rate=20,
    seed=0,
):
    """The reference constant-motion scene used by the accuracy checks.

    A sparse random dot pattern translating at ``velocity`` (px/s) for
    ``duration`` seconds, with dots placed so no trajectory leaves the sensor;
    ``n_events // rate`` dots emit ``rate`` events each.
    """
    vx, vy = velocity
    mx = int(np.ceil(abs(vx) * duration)) + 1
    my = int(np.ceil(abs(vy) * duration)) + 1
    margin = (
        mx if vx < 0 else 1,
        mx if vx > 0 else 1,
        my if vy < 0 else 1,
        my if vy > 0 else 1,
    )
    pattern = dot_pattern(width, height, n_events // rate, margin=margin, seed=seed)
    return generate_linear_motion_events(pattern, velocity, duration, rate, seed=seed + 1)


def concatenate(slices: Sequence[EventSlice]) -> EventSlice:
    """Merge slices sharing one geometry into a single time-sorted slice."""
    if not slices:
        raise ValueError("nothing to concatenate")
    w, h = slices[0].width, slices[0].height
    return EventSlice.from_arrays(
        np.concatenate([s.x for s in slices]),
        np.concatenate([s.y for s in slices]),
        np.concatenate([s.t for s in slices]),
        np.concatenate([s.p for s in slices]),
        width=w,
        height=h,
    )
