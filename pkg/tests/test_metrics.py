import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmflow.events import EventSlice
from cmflow.exceptions import GeometryError, UndefinedMetricError
from cmflow.flowrep import DenseFlow
from cmflow.metrics import aee_and_outliers, eval_mask, fwl, gt_valid_mask, to_displacement

from conftest import random_slice

FULL = np.ones((4, 5), bool)


def test_identical_fields():
    f = DenseFlow.constant((1.5, -2), 5, 4)
    assert aee_and_outliers(f, f, FULL) == (0.0, 0.0)


def test_uniform_unit_error():
    gt = DenseFlow.constant((1.5, -2), 5, 4)
    assert aee_and_outliers(DenseFlow.constant((2.5, -2), 5, 4), gt, FULL) == (1.0, 0.0)


def test_uniform_error_above_threshold():
    gt = DenseFlow.zeros(5, 4)
    assert aee_and_outliers(DenseFlow.constant((0, 4), 5, 4), gt, FULL) == (4.0, 100.0)


def test_outlier_threshold_is_strict():
    gt = DenseFlow.zeros(5, 4)
    assert aee_and_outliers(DenseFlow.constant((3, 0), 5, 4), gt, FULL)[1] == 0.0


def test_mask_selects_pixels():
    gt = DenseFlow.zeros(2, 1)
    pred = DenseFlow.from_components([[0.0, 10.0]], [[0.0, 0.0]])
    assert aee_and_outliers(pred, gt, [[True, False]]) == (0.0, 0.0)
    assert aee_and_outliers(pred, gt, [[True, True]]) == (5.0, 50.0)


def test_empty_mask_and_shape_errors():
    f = DenseFlow.zeros(5, 4)
    with pytest.raises(UndefinedMetricError):
        aee_and_outliers(f, f, np.zeros((4, 5), bool))
    with pytest.raises(GeometryError):
        aee_and_outliers(f, DenseFlow.zeros(4, 4), FULL)
    with pytest.raises(GeometryError):
        aee_and_outliers(f, f, np.ones((3, 3), bool))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_aee_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (DenseFlow(rng.normal(size=(2, 3, 4))) for _ in range(3))
    mask = rng.random((3, 4)) < 0.7
    mask[0, 0] = True
    ab = aee_and_outliers(a, b, mask)[0]
    assert ab == pytest.approx(aee_and_outliers(b, a, mask)[0])
    assert ab <= aee_and_outliers(a, c, mask)[0] + aee_and_outliers(c, b, mask)[0] + 1e-12
    assert aee_and_outliers(a, a, mask)[0] == 0.0


def test_eval_mask_needs_events_and_valid_gt():
    ev = EventSlice([0, 2], [0, 1], [0.0, 1.0], [1, 1], width=3, height=2)
    assert eval_mask(ev).tolist() == [[True, False, False], [False, False, True]]
    valid = np.array([[False, True, True], [True, True, True]])
    assert eval_mask(ev, valid).tolist() == [[False, False, False], [False, False, True]]


def test_gt_valid_mask():
    gt = DenseFlow.from_components([[0.0, 1.0]], [[0.0, 0.0]])
    assert gt_valid_mask(gt).tolist() == [[False, True]]


def test_to_displacement():
    assert to_displacement(DenseFlow.constant((8, -2), 2, 2), 0.5).u[0, 0] == 4.0


def test_fwl_of_zero_flow_is_one(rng):
    ev = random_slice(rng)
    assert fwl(ev, DenseFlow.zeros(ev.width, ev.height)) == 1.0


def test_fwl_of_true_flow_exceeds_one(oracle):
    ev, gt = oracle
    assert fwl(ev, gt) > 1.0
    assert fwl(ev, gt, "upwind") > 1.0


def test_fwl_rejects_flat_reference():
    ev = EventSlice.from_arrays(*np.mgrid[0:1, 0:1].reshape(2, -1), np.zeros(1), width=1, height=1)
    with pytest.raises(UndefinedMetricError):
        fwl(ev, DenseFlow.zeros(1, 1))
