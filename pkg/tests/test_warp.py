import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmflow.events import EventSlice
from cmflow.exceptions import GeometryError
from cmflow.flowrep import DenseFlow
from cmflow.pde import FlowVolume
from cmflow.warp import (
    accumulate_iwe,
    iwe_at,
    splat,
    splat_position_gradient,
    warp_events,
    warp_events_time_aware,
)

from conftest import random_slice


def one_event(x=5, y=5, t=1.0, w=16, h=16):
    return EventSlice([x], [y], [t], [1], width=w, height=h)


def test_warp_follows_the_motion_line():
    ev = one_event()
    flow = DenseFlow.constant((2, 3), 16, 16)
    # the line through (5,5) at t=1 with velocity (2,3) passes (3,2) at t=0 and (7,8) at t=2
    back = warp_events(ev, flow, 0.0)
    ahead = warp_events(ev, flow, 2.0)
    assert (back.x[0], back.y[0]) == (3.0, 2.0)
    assert (ahead.x[0], ahead.y[0]) == (7.0, 8.0)


def test_warp_at_own_time_and_zero_flow_are_identity(rng):
    ev = random_slice(rng)
    w = warp_events(ev, DenseFlow.constant((4, -1), ev.width, ev.height), 0.05)
    same = warp_events(ev[:1], DenseFlow.constant((4, -1), ev.width, ev.height), ev.t[0])
    assert (same.x[0], same.y[0]) == (ev.x[0], ev.y[0])
    z = warp_events(ev, DenseFlow.zeros(ev.width, ev.height), 123.0)
    assert np.array_equal(z.x, ev.x) and np.array_equal(z.y, ev.y)
    assert len(w) == len(ev)


def test_warp_reads_flow_at_the_event_pixel():
    u = np.zeros((4, 4))
    u[2, 1] = 10.0
    flow = DenseFlow.from_components(u, np.zeros((4, 4)))
    ev = EventSlice([1, 2], [2, 2], [0.0, 0.0], [1, 1], width=4, height=4)
    w = warp_events(ev, flow, 0.5)
    assert w.x.tolist() == [6.0, 2.0]


def test_geometry_mismatch():
    with pytest.raises(GeometryError):
        warp_events(one_event(), DenseFlow.zeros(8, 8), 0.0)


def test_time_aware_constant_volume_matches_plain_warp():
    vol = FlowVolume(np.stack([DenseFlow.constant((2, 3), 16, 16).uv] * 3), [0.5, 1.0, 1.5], 0.0, 2.0)
    w = warp_events_time_aware(one_event(), vol, 2.0)
    assert (w.x[0], w.y[0]) == (7.0, 8.0)


def test_time_aware_bins_push_opposite_ways():
    bins = np.stack([DenseFlow.constant((1, 0), 8, 8).uv, DenseFlow.constant((-1, 0), 8, 8).uv])
    vol = FlowVolume(bins, [0.5, 1.5], 0.0, 2.0)
    ev = EventSlice([4, 4], [4, 4], [0.2, 1.2], [1, 1], width=8, height=8)
    first = warp_events_time_aware(ev[0], vol, 1.2)  # t_ref - t = 1
    second = warp_events_time_aware(ev[1], vol, 2.2)
    assert first.x[0] == 5.0 and second.x[0] == 3.0


def test_time_aware_out_of_span():
    vol = FlowVolume(np.zeros((1, 2, 16, 16)), [0.5], 0.0, 0.9)
    with pytest.raises(ValueError):
        warp_events_time_aware(one_event(t=1.0), vol, 0.0)


def test_peak_density_at_integer_position():
    img = splat([8.0], [8.0], 17, 17, 1.0)
    assert img[8, 8] == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-12)


def test_empty_and_offframe():
    assert not splat([], [], 5, 5).any()
    assert not splat([-20.0], [3.0], 5, 5).any()


def test_mass_far_from_border():
    rng = np.random.default_rng(0)
    x = rng.uniform(20, 40, 50)
    y = rng.uniform(20, 40, 50)
    img = splat(x, y, 64, 64)
    # discrete Gaussian sampled on the integer lattice; 3-sigma tail <= 0.54% of 2-D mass
    assert 50 * 0.99 <= img.sum() <= 50 * 1.0001


def test_polarity_is_ignored():
    a = EventSlice([3, 4], [3, 4], [0.0, 0.1], [1, 1], width=8, height=8)
    b = EventSlice([3, 4], [3, 4], [0.0, 0.1], [-1, 1], width=8, height=8)
    flow = DenseFlow.constant((1, 0), 8, 8)
    assert np.array_equal(iwe_at(a, flow, 0.0).values, iwe_at(b, flow, 0.0).values)


def test_additivity():
    rng = np.random.default_rng(5)
    x, y = rng.uniform(0, 20, (2, 30))
    whole = splat(x, y, 20, 20)
    parts = splat(x[:11], y[:11], 20, 20) + splat(x[11:], y[11:], 20, 20)
    assert np.allclose(whole, parts, rtol=0, atol=1e-14)


def test_kernel_vanishes_beyond_four_sigma():
    img = splat([10.0], [10.0], 21, 21, 1.0)
    assert img[10, 14] == 0.0 and img[10, 15] == 0.0
    assert img[10, 13] > 0.0


def test_identity_iwe_independent_of_reference(rng):
    ev = random_slice(rng)
    zero = DenseFlow.zeros(ev.width, ev.height)
    a = iwe_at(ev, zero, ev.t_first).values
    b = iwe_at(ev, zero, 17.0).values
    assert np.array_equal(a, b)


def test_true_flow_narrows_the_support(oracle):
    ev, gt = oracle
    sharp = iwe_at(ev, gt, ev.t_mid).values
    blur = iwe_at(ev, DenseFlow.zeros(64, 64), ev.t_mid).values
    cols = lambda img: np.count_nonzero((img > 1e-3).any(axis=0))
    assert cols(sharp) <= cols(blur)


def test_mass_never_exceeds_count(rng):
    ev = random_slice(rng, n=200)
    img = iwe_at(ev, DenseFlow.constant((50, -30), ev.width, ev.height), ev.t_first)
    assert img.mass <= len(ev)
    assert np.all(img.values >= 0)


def test_sigma_must_be_positive(rng):
    ev = random_slice(rng)
    with pytest.raises(ValueError):
        accumulate_iwe(warp_events(ev, DenseFlow.zeros(ev.width, ev.height), 0.0), ev.width, ev.height, 0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), sigma=st.sampled_from([0.7, 1.0, 1.6]))
def test_position_gradient_matches_differences(seed, sigma):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 14, 6)
    y = rng.uniform(-2, 12, 6)
    adj = rng.normal(size=(12, 14))
    gx, gy = splat_position_gradient(x, y, adj, sigma)
    h = 1e-6
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        fx = (np.sum(adj * splat(x + e, y, 14, 12, sigma)) - np.sum(adj * splat(x - e, y, 14, 12, sigma))) / (2 * h)
        fy = (np.sum(adj * splat(x, y + e, 14, 12, sigma)) - np.sum(adj * splat(x, y - e, 14, 12, sigma))) / (2 * h)
        assert gx[i] == pytest.approx(fx, abs=1e-6)
        assert gy[i] == pytest.approx(fy, abs=1e-6)
