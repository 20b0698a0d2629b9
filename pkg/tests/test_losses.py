import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthdistill import oracles
from depthdistill.core import DepthMap
from depthdistill.errors import EmptyMaskError, InsufficientDataError, InvalidArgumentError
from depthdistill.losses import (
    LossConfig,
    LossWeights,
    combined_loss,
    gradient_matching,
    l1_masked,
    ssi_align,
    ssi_loss,
)

from conftest import fd_combined, fd_gradient_matching, fd_l1, fd_ssi, random_depth

seeds = st.integers(0, 2**32 - 1)


def dm(values, valid=None):
    return DepthMap(np.asarray(values, dtype=float), valid)


# -- l1 ---------------------------------------------------------------------------


def test_l1_identical():
    d = dm([[1.0, 2.0], [3.0, 4.0]])
    loss, grad = l1_masked(d, d)
    assert loss == 0.0 and not grad.any()


def test_l1_hand_example():
    loss, grad = l1_masked(dm([[2.0, 2.0]]), dm([[1.0, 3.0]]))
    assert loss == 1.0
    assert grad.tolist() == [[0.5, -0.5]]


def test_l1_disjoint_masks():
    with pytest.raises(EmptyMaskError):
        l1_masked(dm([[1.0, 0.0]]), dm([[0.0, 1.0]]))


def test_l1_matches_reference(rng):
    p, t = random_depth(rng, 9, 11), random_depth(rng, 9, 11, p_valid=0.4)
    ref = oracles.l1_reference(p.values, t.values, p.valid & t.valid)
    assert l1_masked(p, t)[0] == pytest.approx(ref, rel=1e-13)


# -- alignment ----------------------------------------------------------------------


def test_exact_affine_relation(rng):
    mono = random_depth(rng, 8, 8)
    pred = DepthMap(np.where(mono.valid, 2 * mono.values + 3, 0.0), mono.valid)
    a = ssi_align(pred, mono)
    assert a.s == pytest.approx(2.0, abs=1e-12) and a.b == pytest.approx(3.0, abs=1e-11)
    assert ssi_loss(pred, mono)[0] < 1e-12


def test_constant_mono_degenerate(rng):
    a = ssi_align(random_depth(rng, 5, 5), dm(np.full((5, 5), 4.0)))
    assert a.degenerate and a.s == 1.0


def test_insufficient_data():
    with pytest.raises(InsufficientDataError):
        ssi_align(dm([[1.0, 0.0]]), dm([[1.0, 1.0]]))


def test_alignment_matches_lstsq(rng):
    p, m = random_depth(rng, 16, 16), random_depth(rng, 16, 16)
    a = ssi_align(p, m)
    s, b = oracles.lstsq_alignment(p.values, m.values, p.valid & m.valid)
    assert a.s == pytest.approx(s, rel=1e-10) and a.b == pytest.approx(b, rel=1e-10, abs=1e-10)


def test_alignment_near_grid_optimum(rng):
    # generated so that the optimum lies inside the search box
    m = random_depth(rng, 32, 32)
    noise = rng.normal(0, 0.3, m.shape)
    p = DepthMap(np.where(m.valid, 1.7 * m.values + 2.2 + noise, 0.0) + 5.0 * ~m.valid)
    a = ssi_align(p, m)
    mask = p.valid & m.valid
    gs, gb, gobj = oracles.grid_search_alignment(p.values, m.values, mask)
    assert abs(a.s - gs) <= 1e-3 and abs(a.b - gb) <= 1e-3
    assert oracles.ls_objective(p.values, m.values, mask, a.s, a.b) <= gobj


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0.01, 100), st.floats(-50, 50))
def test_affine_invariance(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    pred, mono = random_depth(rng, 10, 10), random_depth(rng, 10, 10)
    moved = np.where(mono.valid, alpha * mono.values + beta, 0.0)
    if np.any(moved[mono.valid] <= 0):
        moved = np.where(mono.valid, moved - moved[mono.valid].min() + 1.0, 0.0)
    l0 = ssi_loss(pred, mono)[0]
    l1 = ssi_loss(pred, DepthMap(moved, mono.valid))[0]
    assert abs(l1 - l0) < 1e-9


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from([0.5, 2.0, 4.0, 0.125]))
def test_scale_equivariance(seed, alpha):
    # powers of two keep the rescaling exact in floating point
    rng = np.random.default_rng(seed)
    pred, mono = random_depth(rng, 10, 10), random_depth(rng, 10, 10)
    a = ssi_align(pred, mono)
    b = ssi_align(pred, mono.scaled(alpha))
    assert b.s == a.s / alpha and b.b == a.b


def test_lad_not_worse_than_ls(rng):
    p, m = random_depth(rng, 16, 16), random_depth(rng, 16, 16)
    ls = ssi_loss(p, m, solver="ls")[0]
    lad = ssi_loss(p, m, solver="lad")[0]
    assert lad <= ls + 1e-12


def test_lad_robust_to_outliers(rng):
    m = random_depth(rng, 16, 16, p_valid=1.0)
    vals = 3 * m.values + 1
    vals[:2, :] += 50.0
    a = ssi_align(DepthMap(vals), m, solver="lad")
    assert a.s == pytest.approx(3.0, abs=1e-6) and a.b == pytest.approx(1.0, abs=1e-5)


def test_detached_is_plain_sign(rng):
    p, m = random_depth(rng, 8, 8), random_depth(rng, 8, 8)
    _, g, a = ssi_loss(p, m, grad_mode="detached")
    mask = p.valid & m.valid
    expect = np.where(mask, np.sign(p.values - a.s * m.values - a.b), 0.0) / mask.sum()
    np.testing.assert_array_equal(g, expect)


# -- gradient matching ----------------------------------------------------------------


def test_gm_zero_for_equal_and_shifted(rng):
    # dyadic depths make t + c exact, so the residual is exactly constant
    ok = rng.random((16, 16)) < 0.9
    t = DepthMap(np.where(ok, rng.integers(1024, 10240, (16, 16)) / 1024.0, 0.0), ok)
    assert gradient_matching(t, t)[0] == 0.0
    shifted = DepthMap(np.where(t.valid, t.values + 3.0, 0.0), t.valid)
    assert gradient_matching(shifted, t)[0] == 0.0


def test_gm_shift_general_floats(rng):
    # with arbitrary floats only rounding of t + c remains
    t = random_depth(rng, 16, 16)
    shifted = DepthMap(np.where(t.valid, t.values + 3.0, 0.0), t.valid)
    assert gradient_matching(shifted, t)[0] < 1e-14


def test_gm_step_edge_hand_example():
    # R has a unit step between columns 1 and 2; K=1
    r = np.zeros((4, 4))
    r[:, 2:] = 1.0
    target = DepthMap(np.full((4, 4), 5.0))
    pred = DepthMap(5.0 + r)
    loss, _ = gradient_matching(pred, target, levels=1)
    # 4 horizontal pairs cross the edge, none vertical, N = 16
    assert loss == 4 / 16


def test_gm_matches_reference(rng):
    p, t = random_depth(rng, 13, 11, p_valid=0.8), random_depth(rng, 13, 11, p_valid=0.8)
    mask = p.valid & t.valid
    ref = oracles.gradient_matching_reference(p.values - t.values, mask, 4)
    assert gradient_matching(p, t, 4)[0] == pytest.approx(ref, rel=1e-12)


def test_gm_empty_mask():
    with pytest.raises(EmptyMaskError):
        gradient_matching(dm([[1.0, 0.0]]), dm([[0.0, 1.0]]))


def test_gm_levels_validated(rng):
    with pytest.raises(InvalidArgumentError):
        gradient_matching(random_depth(rng, 4, 4), random_depth(rng, 4, 4), levels=0)


# -- combined -------------------------------------------------------------------------


def test_combined_simultaneous_optimum(rng):
    mono = random_depth(rng, 12, 12, p_valid=1.0)
    pred = DepthMap(2 * mono.values + 1)
    gt_ok = rng.random(mono.shape) < 0.1
    gt = DepthMap(np.where(gt_ok, pred.values, 0.0), gt_ok)
    rep = combined_loss(pred, gt, mono)
    assert rep.sup == 0.0
    assert rep.ssi < 1e-12 and rep.reg < 1e-12 and rep.total < 1e-12


def test_combined_projection(rng):
    p, g, m = random_depth(rng, 12, 12), random_depth(rng, 12, 12, p_valid=0.2), random_depth(rng, 12, 12)
    rep = combined_loss(p, g, m, LossWeights(1.0, 0.0, 0.0))
    loss, grad = l1_masked(p, g)
    assert rep.total == loss
    np.testing.assert_array_equal(rep.grad_total, grad)


def test_combined_total_is_weighted_sum(rng):
    p, g, m = random_depth(rng, 12, 12), random_depth(rng, 12, 12, p_valid=0.2), random_depth(rng, 12, 12)
    w = LossWeights(0.3, 1.7, 0.9)
    rep = combined_loss(p, g, m, w)
    assert rep.total == 0.3 * rep.sup + 1.7 * rep.ssi + 0.9 * rep.reg
    assert not rep.grad_total[~p.valid].any()


def test_combined_matches_reference(rng):
    p, g, m = random_depth(rng, 16, 16), random_depth(rng, 16, 16, p_valid=0.3), random_depth(rng, 16, 16)
    rep = combined_loss(p, g, m)
    total, sup, ssi, reg, s, b = oracles.combined_reference(
        p.values, p.valid, g.values, g.valid, m.values, m.valid
    )
    assert rep.total == pytest.approx(total, rel=1e-10)
    assert (rep.sup, rep.ssi, rep.reg) == pytest.approx((sup, ssi, reg), rel=1e-10)


def test_combined_raw_target(rng):
    p, g, m = random_depth(rng, 12, 12), random_depth(rng, 12, 12, p_valid=0.2), random_depth(rng, 12, 12)
    rep = combined_loss(p, g, m, cfg=LossConfig(reg_target="raw"))
    assert rep.reg == pytest.approx(gradient_matching(p, m)[0], rel=1e-15)


@pytest.mark.parametrize(
    "weights", [(-1.0, 1.0, 1.0), (0.0, 0.0, 0.0), (np.inf, 1.0, 1.0)]
)
def test_weights_validated(weights):
    with pytest.raises(InvalidArgumentError):
        LossWeights(*weights)


# -- properties -------------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p, g, m = random_depth(rng, 8, 8), random_depth(rng, 8, 8, p_valid=0.5), random_depth(rng, 8, 8)
    rep = combined_loss(p, g, m)
    assert rep.sup >= 0 and rep.ssi >= 0 and rep.reg >= 0


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.5, 50))
def test_mask_locality(seed, junk):
    rng = np.random.default_rng(seed)
    p, g, m = random_depth(rng, 8, 8, p_valid=0.7), random_depth(rng, 8, 8, p_valid=0.5), random_depth(rng, 8, 8)
    base = combined_loss(p, g, m)
    # junk under every invalid prediction pixel, still masked out
    poked = DepthMap(np.where(p.valid, p.values, junk), p.valid)
    again = combined_loss(poked, g, m)
    assert (again.sup, again.ssi, again.reg) == (base.sup, base.ssi, base.reg)
    # and changing gt/mono at pixels outside the prediction mask is invisible
    g2 = DepthMap(np.where(~p.valid & ~g.valid, junk, g.values), g.valid | ~p.valid)
    m2 = DepthMap(np.where(~p.valid, junk, m.values), m.valid | ~p.valid)
    other = combined_loss(p, g2, m2)
    assert (other.sup, other.ssi, other.reg) == (base.sup, base.ssi, base.reg)


@pytest.mark.parametrize("check", [fd_l1, fd_ssi, fd_gradient_matching, fd_combined])
def test_finite_differences(check, rng):
    assert max(check(rng) for _ in range(3)) < 1e-4


def test_other_modes_finite(rng):
    for cfg in (LossConfig(solver="lad"), LossConfig(grad_mode="detached"), LossConfig(reg_target="raw")):
        p, g, m = random_depth(rng, 10, 10), random_depth(rng, 10, 10, p_valid=0.3), random_depth(rng, 10, 10)
        rep = combined_loss(p, g, m, cfg=cfg)
        assert np.isfinite(rep.grad_total).all()


def test_row_grid_oracle_equals_full_lattice(rng):
    for _ in range(2):
        m = random_depth(rng, 32, 32)
        noise = rng.normal(0, 0.3, m.shape)
        p = rng.uniform(0.5, 4) * m.values + rng.uniform(-8, 8) + noise
        mask = m.valid
        full = oracles.grid_search_alignment(p, m.values, mask)
        rows = oracles.grid_search_alignment_rows(p, m.values, mask)
        assert full[:2] == rows[:2]
        assert full[2] == pytest.approx(rows[2], rel=1e-12)


def test_kink_oracle_matches_loop_reference(rng):
    for h, w in ((16, 16), (13, 9), (5, 7)):
        r = rng.normal(size=(h, w))
        mask = rng.random((h, w)) < 0.8
        fast = oracles.gradient_matching_kinks(r, mask, 4)
        slow = oracles._level_differences(r, mask, 4)
        np.testing.assert_allclose(np.sort(fast), np.sort(slow), rtol=1e-13, atol=1e-15)
