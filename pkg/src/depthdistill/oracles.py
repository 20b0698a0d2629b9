"""Independent reference computations used to check the fast paths.

Nothing here calls into the implementations it checks: ray casting uses a
different intersection algorithm over all triangles, the alignment oracle
is an exhaustive grid search, loss references are loop-based, and
gradients are checked by central finite differences.
"""

from __future__ import annotations

import math

import numpy as np

TIE_EPSILON = 1e-12


# -- ray casting --------------------------------------------------------------


def brute_force_cast(vertices, triangles, direction, origin=(0.0, 0.0, 0.0), t_epsilon=1e-6):
    """Nearest Moller-Trumbore hit over every triangle; (triangle, t) or (-1, nan)."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    c = np.asarray(vertices, dtype=np.float64)[np.asarray(triangles)]
    if len(c) == 0:
        return -1, math.nan
    e1 = c[:, 1] - c[:, 0]
    e2 = c[:, 2] - c[:, 0]
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = det != 0
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - c[:, 0]
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ d) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > t_epsilon)
    if not hit.any():
        return -1, math.nan
    t_hit = np.where(hit, t, np.inf)
    t_min = t_hit.min()
    tri = int(np.nonzero(t_hit <= t_min + TIE_EPSILON)[0].min())
    return tri, float(t[tri])


def frustum_rays(rng, n, K, width, height, margin=2.0):
    """Unit rays through uniformly random sub-pixel positions, slightly
    overshooting the frame so that some rays miss."""
    u = rng.uniform(-margin, width - 1 + margin, n)
    v = rng.uniform(-margin, height - 1 + margin, n)
    d = np.column_stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones(n)])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def barycentric_residual(corners, point):
    """Distance from ``point`` to its barycentric reconstruction on the triangle,
    plus the most negative barycentric coordinate."""
    a, b, c = (np.asarray(x, dtype=np.float64) for x in corners)
    p = np.asarray(point, dtype=np.float64)
    m = np.column_stack([b - a, c - a])
    coef, *_ = np.linalg.lstsq(m, p - a, rcond=None)
    recon = a + m @ coef
    w = np.array([1 - coef.sum(), coef[0], coef[1]])
    return float(np.linalg.norm(recon - p)), float(w.min())


# -- alignment ----------------------------------------------------------------


def lstsq_alignment(pred, mono, mask):
    """(s, b) from numpy's generic least-squares solver."""
    m = mono[mask]
    a = np.column_stack([m, np.ones_like(m)])
    (s, b), *_ = np.linalg.lstsq(a, pred[mask], rcond=None)
    return float(s), float(b)


def ls_objective(pred, mono, mask, s, b):
    r = pred[mask] - s * mono[mask] - b
    return float(np.sum(r * r))


def grid_search_alignment(pred, mono, mask, s_range=(0.0, 5.0), b_range=(-10.0, 10.0), step=1e-3):
    """Exhaustive least-squares search over the full (s, b) lattice.

    Returns (s, b, objective) of the best lattice point. The objective is
    evaluated through its quadratic expansion for speed, then the winner
    is re-scored directly on the residuals.
    """
    p = pred[mask].astype(np.float64)
    m = mono[mask].astype(np.float64)
    n = p.size
    # centre the data so the expansion does not cancel catastrophically
    pc, mc = p.mean(), m.mean()
    p0, m0 = p - pc, m - mc
    spp, smm, spm = np.dot(p0, p0), np.dot(m0, m0), np.dot(p0, m0)
    ss = np.round(np.arange(s_range[0], s_range[1] + step / 2, step), 12)
    bs = np.round(np.arange(b_range[0], b_range[1] + step / 2, step), 12)
    best = (np.inf, 0.0, 0.0)
    chunk = 256
    for i in range(0, len(ss), chunk):
        s = ss[i : i + chunk, None]
        # residual = p0 - s*m0 - (b - (pc - s*mc)) =: p0 - s*m0 - e
        e = bs[None, :] - (pc - s * mc)
        q = spp - 2 * s * spm + s * s * smm + n * e * e
        k = int(np.argmin(q))
        r, c = divmod(k, q.shape[1])
        if q[r, c] < best[0]:
            best = (q[r, c], float(ss[i + r]), float(bs[c]))
    _, s_best, b_best = best
    return s_best, b_best, float(np.sum((p - s_best * m - b_best) ** 2))


def grid_search_alignment_rows(pred, mono, mask, s_range=(0.0, 5.0), b_range=(-10.0, 10.0), step=1e-3):
    """Same lattice minimum as :func:`grid_search_alignment`, row by row.

    For fixed s the objective is a parabola in b, so the best lattice b is
    one of the two grid points around its vertex (clipped to the range).
    Every s row is scanned; both candidates are scored directly on the
    residuals.
    """
    p = pred[mask].astype(np.float64)
    m = mono[mask].astype(np.float64)
    ss = np.round(np.arange(s_range[0], s_range[1] + step / 2, step), 12)
    bs = np.round(np.arange(b_range[0], b_range[1] + step / 2, step), 12)
    vertex = p.mean() - ss * m.mean()
    k = np.clip(np.floor((vertex - bs[0]) / step).astype(np.int64), 0, len(bs) - 1)
    best = (np.inf, 0.0, 0.0)
    for kk in (k, np.minimum(k + 1, len(bs) - 1)):
        b = bs[kk]
        r = p[None, :] - ss[:, None] * m[None, :] - b[:, None]
        obj = np.einsum("ij,ij->i", r, r)
        i = int(np.argmin(obj))
        if obj[i] < best[0]:
            best = (float(obj[i]), float(ss[i]), float(b[i]))
    return best[1], best[2], best[0]


# -- loss references ----------------------------------------------------------


def l1_reference(pred, target, mask):
    total, n = 0.0, 0
    for p, t, ok in zip(pred.ravel(), target.ravel(), mask.ravel()):
        if ok:
            total += abs(p - t)
            n += 1
    return total / n


def ssi_reference(pred, mono, mask):
    s, b = lstsq_alignment(pred, mono, mask)
    return float(np.mean(np.abs(pred[mask] - s * mono[mask] - b))), s, b


def _pool_reference(vals, ok):
    h, w = vals.shape
    ho, wo = max(h // 2, 1), max(w // 2, 1)
    out = np.zeros((ho, wo))
    out_ok = np.zeros((ho, wo), dtype=bool)
    for i in range(ho):
        rows = range(2 * i, h if i == ho - 1 else 2 * i + 2)
        for j in range(wo):
            cols = range(2 * j, w if j == wo - 1 else 2 * j + 2)
            acc = [vals[r, c] for r in rows for c in cols if ok[r, c]]
            if acc:
                out[i, j] = sum(acc) / len(acc)
                out_ok[i, j] = True
    return out, out_ok


def _level_differences(residual, mask, levels):
    r, ok = np.where(mask, residual, 0.0), mask.copy()
    diffs = []
    for k in range(levels):
        if k:
            r, ok = _pool_reference(r, ok)
        h, w = r.shape
        for i in range(h):
            for j in range(w):
                if j + 1 < w and ok[i, j] and ok[i, j + 1]:
                    diffs.append(r[i, j + 1] - r[i, j])
                if i + 1 < h and ok[i, j] and ok[i + 1, j]:
                    diffs.append(r[i + 1, j] - r[i, j])
    return np.array(diffs)


def gradient_matching_reference(residual, mask, levels):
    return float(np.abs(_level_differences(residual, mask, levels)).sum()) / int(mask.sum())


def _pool_blocks(vals, ok):
    """Vectorised twin of :func:`_pool_reference` (block labels + add.at)."""
    h, w = vals.shape
    ho, wo = max(h // 2, 1), max(w // 2, 1)
    bi = np.minimum(np.arange(h) // 2, ho - 1)[:, None]
    bj = np.minimum(np.arange(w) // 2, wo - 1)[None, :]
    total = np.zeros((ho, wo))
    count = np.zeros((ho, wo))
    np.add.at(total, (np.broadcast_to(bi, (h, w)), np.broadcast_to(bj, (h, w))), np.where(ok, vals, 0.0))
    np.add.at(count, (np.broadcast_to(bi, (h, w)), np.broadcast_to(bj, (h, w))), ok.astype(float))
    out_ok = count > 0
    return np.where(out_ok, total / np.maximum(count, 1), 0.0), out_ok


def gradient_matching_kinks(residual, mask, levels):
    """Every neighbour difference inside the |.| terms, in a fixed order.

    Same quantities as :func:`_level_differences`, vectorised because the
    finite-difference checker evaluates it twice per pixel.
    """
    r, ok = np.where(mask, residual, 0.0), mask
    out = []
    for k in range(levels):
        if k:
            r, ok = _pool_blocks(r, ok)
        out.append((r[:, 1:] - r[:, :-1])[ok[:, 1:] & ok[:, :-1]])
        out.append((r[1:, :] - r[:-1, :])[ok[1:, :] & ok[:-1, :]])
    return np.concatenate(out)


def combined_reference(pred, pred_ok, gt, gt_ok, mono, mono_ok, weights=(1.0, 1.0, 0.5), levels=4):
    """(total, sup, ssi, reg, s, b) with least-squares alignment."""
    sup = l1_reference(pred, gt, pred_ok & gt_ok)
    joint = pred_ok & mono_ok
    ssi, s, b = ssi_reference(pred, mono, joint)
    reg = gradient_matching_reference(pred - (s * mono + b), joint, levels)
    w_sup, w_ssi, w_reg = weights
    return w_sup * sup + w_ssi * ssi + w_reg * reg, sup, ssi, reg, s, b


def combined_kinks(pred, pred_ok, gt, gt_ok, mono, mono_ok, levels=4):
    sup_mask = pred_ok & gt_ok
    joint = pred_ok & mono_ok
    s, b = lstsq_alignment(pred, mono, joint)
    aligned = pred - (s * mono + b)
    return np.concatenate(
        [(pred - gt)[sup_mask], aligned[joint], gradient_matching_kinks(aligned, joint, levels)]
    )


# -- finite differences -------------------------------------------------------


def central_difference(fn, x, h, pixels=None):
    """Central-difference gradient of scalar ``fn`` at ``x`` (2-D array)."""
    x = np.array(x, dtype=np.float64)
    grad = np.full(x.shape, np.nan)
    idx = np.ndindex(x.shape) if pixels is None else pixels
    for ij in idx:
        xp = x.copy()
        xm = x.copy()
        xp[ij] += h
        xm[ij] -= h
        grad[ij] = (fn(xp) - fn(xm)) / (2 * h)
    return grad


def kink_crossed(kinks, x, h):
    """Per-pixel flag for the finite-difference checker.

    ``kinks(x)`` returns every argument of an absolute value in the loss.
    A pixel is flagged when perturbing it by +-h flips the sign of one of
    those arguments, or moves one that sits within 1e-6 of zero.
    """
    x = np.array(x, dtype=np.float64)
    flags = np.zeros(x.shape, dtype=bool)
    for ij in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[ij] += h
        xm[ij] -= h
        kp, km = np.asarray(kinks(xp)), np.asarray(kinks(xm))
        moved = kp != km
        near = np.minimum(np.abs(kp), np.abs(km)) < 1e-6
        flags[ij] = bool(np.any(np.sign(kp) != np.sign(km)) or np.any(moved & near))
    return flags


def gradient_relative_error(analytic, numeric, skip=None):
    """max |a - n| / max(|a|, |n|, floor) with floor = 1e-6 * max|n|."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    keep = np.isfinite(n) if skip is None else (np.isfinite(n) & ~skip)
    if not keep.any():
        return 0.0
    floor = max(1e-6 * float(np.max(np.abs(n[keep]))), 1e-12)
    denom = np.maximum(np.maximum(np.abs(a[keep]), np.abs(n[keep])), floor)
    return float(np.max(np.abs(a[keep] - n[keep]) / denom))
