import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthdistill.core import DepthMap
from depthdistill.errors import EmptyMaskError
from depthdistill.metrics import evaluate, mean_report

from conftest import random_depth


def dm(values):
    return DepthMap(np.asarray(values, dtype=float))


def test_identical():
    d = dm([[1.0, 2.0, 3.0]])
    r = evaluate(d, d)
    assert r.rmse == r.mae == r.rel == r.irmse == r.imae == 0.0
    assert r.delta[1.25] == 1.0


def test_hand_example():
    r = evaluate(dm([[2.0, 2.0]]), dm([[1.0, 3.0]]))
    assert r.rmse == pytest.approx(1000.0, abs=1e-9)
    assert r.mae == pytest.approx(1000.0, abs=1e-9)
    assert r.rel == pytest.approx((1 + 1 / 3) / 2, abs=1e-9)
    # inverse errors: |1/2 - 1| = 0.5 and |1/2 - 1/3| = 1/6 per metre
    assert r.imae == pytest.approx((0.5 + 1 / 6) / 2 * 1000, rel=1e-12)
    assert r.irmse == pytest.approx(np.sqrt((0.25 + 1 / 36) / 2) * 1000, rel=1e-12)
    assert r.n_valid == 2


def test_nyu_units():
    r = evaluate(dm([[2.0, 2.0]]), dm([[1.0, 3.0]]), units="nyu_m")
    assert r.rmse == pytest.approx(1.0, abs=1e-12)


def test_delta_ratio_forced(rng):
    gt = random_depth(rng, 10, 10, p_valid=1.0)
    r = evaluate(gt.scaled(1.3), gt)
    assert r.delta[1.25] == 0.0 and r.delta[1.5625] == 1.0


def test_joint_mask_only():
    pred = DepthMap(np.array([[2.0, 100.0]]), np.array([[True, True]]))
    gt = DepthMap(np.array([[1.0, 0.0]]))
    assert evaluate(pred, gt).n_valid == 1


def test_empty_joint_mask():
    with pytest.raises(EmptyMaskError):
        evaluate(DepthMap(np.array([[1.0, 0.0]])), DepthMap(np.array([[0.0, 1.0]])))


def test_mean_report_is_per_image():
    a = evaluate(dm([[2.0, 2.0]]), dm([[1.0, 3.0]]))
    b = evaluate(dm([[1.0, 1.0, 1.0, 1.0]]), dm([[1.0, 1.0, 1.0, 1.0]]))
    m = mean_report([a, b])
    assert m.rmse == 500.0 and m.mae == 500.0
    assert m.n_valid == 6


def test_symmetry(rng):
    p, g = random_depth(rng, 9, 9), random_depth(rng, 9, 9)
    a, b = evaluate(p, g), evaluate(g, p)
    assert (a.rmse, a.mae) == pytest.approx((b.rmse, b.mae), rel=1e-15)
    assert a.delta == b.delta
    assert a.rel != b.rel


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rmse_ge_mae_and_delta_monotone(seed):
    rng = np.random.default_rng(seed)
    p, g = random_depth(rng, 6, 7, 0.5, 80.0), random_depth(rng, 6, 7, 0.5, 80.0)
    r = evaluate(p, g, thresholds=sorted(rng.uniform(1.0, 3.0, 6)))
    assert r.rmse >= r.mae * (1 - 1e-12)
    d = [r.delta[t] for t in sorted(r.delta)]
    assert all(x <= y for x, y in zip(d, d[1:]))
    assert all(0.0 <= x <= 1.0 for x in d)
