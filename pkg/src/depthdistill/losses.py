"""Distillation objective with hand-derived gradients.

Terms, all evaluated on validity masks and averaged over valid pixels:

* masked L1 against sparse ground truth (also used for pre-training
  against a dense pseudo-depth target),
* scale- and shift-invariant L1 after aligning the monocular depth to the
  prediction with a closed-form least-squares (s, b),
* multi-scale gradient matching on the prediction / aligned-mono residual.

Every function returns the loss together with d(loss)/d(pred) as an array
shaped like the prediction, zero at pixels outside the term's mask.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import DEFAULT_LEVELS, DepthMap, Reduction, masked_reduce, pool2x2, unpool_grad
from .errors import EmptyMaskError, InsufficientDataError, InvalidArgumentError

DEGENERATE_VAR = 1e-12


class Solver(str, enum.Enum):
    LS = "ls"
    LAD = "lad"


class GradMode(str, enum.Enum):
    FULL = "full"
    DETACHED = "detached"


class RegTarget(str, enum.Enum):
    ALIGNED = "aligned"
    RAW = "raw"


@dataclass(frozen=True)
class AlignmentParams:
    s: float
    b: float
    degenerate: bool = False


@dataclass(frozen=True)
class LossWeights:
    w_sup: float = 1.0
    w_ssi: float = 1.0
    w_reg: float = 0.5

    def __post_init__(self):
        w = (self.w_sup, self.w_ssi, self.w_reg)
        if any(not np.isfinite(x) or x < 0 for x in w):
            raise InvalidArgumentError(f"loss weights must be finite and >= 0, got {w}")
        if not any(w):
            raise InvalidArgumentError("at least one loss weight must be positive")


@dataclass(frozen=True)
class LossConfig:
    solver: Solver = Solver.LS
    grad_mode: GradMode = GradMode.FULL
    levels: int = DEFAULT_LEVELS
    reg_target: RegTarget = RegTarget.ALIGNED
    lad_iterations: int = 100

    def __post_init__(self):
        object.__setattr__(self, "solver", Solver(self.solver))
        object.__setattr__(self, "grad_mode", GradMode(self.grad_mode))
        object.__setattr__(self, "reg_target", RegTarget(self.reg_target))
        if self.levels < 1:
            raise InvalidArgumentError(f"levels must be >= 1, got {self.levels}")


@dataclass(frozen=True, eq=False)
class LossReport:
    sup: float
    ssi: float
    reg: float
    total: float
    alignment: AlignmentParams
    grad_total: np.ndarray = field(repr=False)
    weights: LossWeights = LossWeights()

    def to_dict(self) -> dict:
        return {
            "sup": self.sup,
            "ssi": self.ssi,
            "reg": self.reg,
            "total": self.total,
            "alignment": {
                "s": self.alignment.s,
                "b": self.alignment.b,
                "degenerate": self.alignment.degenerate,
            },
            "weights": {"w_sup": self.weights.w_sup, "w_ssi": self.weights.w_ssi, "w_reg": self.weights.w_reg},
            "grad_abs_max": float(np.max(np.abs(self.grad_total))) if self.grad_total.size else 0.0,
        }


def _sum(x, mask):
    return masked_reduce(x, mask, Reduction.SUM)


def _check_shapes(*maps: DepthMap):
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"depth maps differ in shape: {sorted(shapes)}")


# -- masked L1 ------------------------------------------------------------------


def l1_masked(pred: DepthMap, target: DepthMap) -> tuple[float, np.ndarray]:
    _check_shapes(pred, target)
    mask = pred.valid & target.valid
    n = int(mask.sum())
    if n == 0:
        raise EmptyMaskError("prediction and target share no valid pixel")
    diff = pred.values - target.values
    loss = _sum(np.abs(diff), mask) / n
    grad = np.where(mask, np.sign(diff), 0.0) / n
    return loss, grad


# -- scale / shift alignment ------------------------------------------------------


def _ls_align(p, m, mask):
    n = int(mask.sum())
    m_bar = _sum(m, mask) / n
    p_bar = _sum(p, mask) / n
    dm = m - m_bar
    s_mm = _sum(dm * dm, mask)
    if s_mm / n < DEGENERATE_VAR:
        return AlignmentParams(1.0, p_bar - m_bar, True), m_bar, s_mm
    s = _sum(dm * (p - p_bar), mask) / s_mm
    return AlignmentParams(s, p_bar - s * m_bar), m_bar, s_mm


def _lad_refine(p, m, mask, start: AlignmentParams, iterations: int) -> AlignmentParams:
    """Iteratively reweighted least squares towards the L1-optimal (s, b)."""
    pv, mv = p[mask], m[mask]
    s, b = start.s, start.b
    best = (np.abs(pv - s * mv - b).sum(), s, b)
    floor = 1e-9 * max(np.abs(pv).max(), 1.0)
    for _ in range(iterations):
        w = 1.0 / np.maximum(np.abs(pv - s * mv - b), floor)
        sw, swm, swp = w.sum(), (w * mv).sum(), (w * pv).sum()
        swmm, swmp = (w * mv * mv).sum(), (w * mv * pv).sum()
        det = sw * swmm - swm * swm
        if det <= 0:
            break
        s_new = (sw * swmp - swm * swp) / det
        b_new = (swp - s_new * swm) / sw
        obj = np.abs(pv - s_new * mv - b_new).sum()
        if obj < best[0]:
            best = (obj, s_new, b_new)
        if abs(s_new - s) <= 1e-12 * max(abs(s), 1.0) and abs(b_new - b) <= 1e-12 * max(abs(b), 1.0):
            break
        s, b = s_new, b_new
    return AlignmentParams(float(best[1]), float(best[2]), False)


def _joint(pred: DepthMap, mono: DepthMap):
    _check_shapes(pred, mono)
    mask = pred.valid & mono.valid
    if mask.sum() < 2:
        raise InsufficientDataError(f"alignment needs >= 2 jointly valid pixels, got {int(mask.sum())}")
    return mask


def ssi_align(pred: DepthMap, mono: DepthMap, solver: Solver | str = Solver.LS, lad_iterations: int = 100) -> AlignmentParams:
    """Scale and shift mapping ``mono`` onto ``pred``.

    ``ls`` solves the 2x2 normal equations in closed form; ``lad`` refines
    that solution towards the least-absolute-deviation optimum. When the
    monocular map is (numerically) constant the scale is pinned to 1 and
    only the shift is fitted.
    """
    mask = _joint(pred, mono)
    align, _, _ = _ls_align(pred.values, mono.values, mask)
    if Solver(solver) is Solver.LAD and not align.degenerate:
        align = _lad_refine(pred.values, mono.values, mask, align, lad_iterations)
    return align


def _through_alignment(g, m, mask, m_bar, s_mm, degenerate):
    """Chain a gradient w.r.t. the residual p - (s m + b) through the
    least-squares (s, b), which are linear in p."""
    n = int(mask.sum())
    g = np.where(mask, g, 0.0)
    out = g - _sum(g, mask) / n
    if not degenerate:
        dm = m - m_bar
        out = out - dm * (_sum(g * dm, mask) / s_mm)
    return np.where(mask, out, 0.0)


def ssi_loss(
    pred: DepthMap,
    mono: DepthMap,
    solver: Solver | str = Solver.LS,
    grad_mode: GradMode | str = GradMode.FULL,
    lad_iterations: int = 100,
) -> tuple[float, np.ndarray, AlignmentParams]:
    """Mean |pred - (s mono + b)| over the joint mask at the solved (s, b).

    In ``full`` mode the gradient accounts for (s, b) moving with pred. For
    ``lad`` the loss is the minimum over (s, b), so its gradient is the
    partial derivative at the optimum and both modes coincide.
    """
    mask = _joint(pred, mono)
    p, m = pred.values, mono.values
    n = int(mask.sum())
    ls, m_bar, s_mm = _ls_align(p, m, mask)
    solver = Solver(solver)
    align = ls
    if solver is Solver.LAD and not ls.degenerate:
        align = _lad_refine(p, m, mask, ls, lad_iterations)
    r = p - (align.s * m + align.b)
    loss = _sum(np.abs(r), mask) / n
    sigma = np.where(mask, np.sign(r), 0.0) / n
    if GradMode(grad_mode) is GradMode.FULL and solver is Solver.LS:
        grad = _through_alignment(sigma, m, mask, m_bar, s_mm, ls.degenerate)
    else:
        grad = sigma
    return loss, grad, align


# -- gradient matching ---------------------------------------------------------


def _gradient_matching(residual: np.ndarray, mask: np.ndarray, levels: int):
    if levels < 1:
        raise InvalidArgumentError(f"levels must be >= 1, got {levels}")
    n = int(mask.sum())
    if n == 0:
        raise EmptyMaskError("gradient matching over an empty mask")
    r, ok = np.where(mask, residual, 0.0), mask
    oks, counts, grads, sums = [], [None], [], []
    for k in range(levels):
        if k:
            r, ok, cnt = pool2x2(r, ok)
            counts.append(cnt)
        oks.append(ok)
        dx = r[:, 1:] - r[:, :-1]
        mx = ok[:, 1:] & ok[:, :-1]
        dy = r[1:, :] - r[:-1, :]
        my = ok[1:, :] & ok[:-1, :]
        sums.append(_sum(np.abs(dx), mx) + _sum(np.abs(dy), my))
        g = np.zeros_like(r)
        sx = np.where(mx, np.sign(dx), 0.0)
        sy = np.where(my, np.sign(dy), 0.0)
        g[:, 1:] += sx
        g[:, :-1] -= sx
        g[1:, :] += sy
        g[:-1, :] -= sy
        grads.append(g)
    total = 0.0
    for s in sums:
        total += s
    g = grads[-1]
    for k in range(levels - 1, 0, -1):
        g = grads[k - 1] + unpool_grad(g, oks[k - 1], counts[k])
    return total / n, np.where(mask, g, 0.0) / n


def gradient_matching(
    pred: DepthMap,
    target: DepthMap | np.ndarray,
    levels: int = DEFAULT_LEVELS,
    target_valid: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Multi-scale L1 penalty on spatial differences of ``pred - target``.

    ``target`` may be a plain array (e.g. an affinely aligned mono map that
    is allowed to go negative); its mask is then ``target_valid`` or its
    finite entries. Differences are taken only between valid neighbours and
    the sum over all levels is divided by the level-0 valid count. The
    gradient is with ``target`` held fixed.
    """
    if isinstance(target, DepthMap):
        t_vals, t_ok = target.values, target.valid
    else:
        t_vals = np.asarray(target, dtype=np.float64)
        t_ok = np.isfinite(t_vals) if target_valid is None else np.asarray(target_valid, dtype=bool)
    if t_vals.shape != pred.shape:
        raise InvalidArgumentError(f"shape mismatch {pred.shape} vs {t_vals.shape}")
    mask = pred.valid & t_ok
    residual = pred.values - np.where(mask, t_vals, 0.0)
    return _gradient_matching(residual, mask, levels)


# -- combined objective -----------------------------------------------------------


def combined_loss(
    pred: DepthMap,
    sparse_gt: DepthMap,
    mono: DepthMap,
    weights: LossWeights | None = None,
    cfg: LossConfig | None = None,
) -> LossReport:
    weights = weights or LossWeights()
    cfg = cfg or LossConfig()
    _check_shapes(pred, sparse_gt, mono)
    sup, g_sup = l1_masked(pred, sparse_gt)
    ssi, g_ssi, align = ssi_loss(pred, mono, cfg.solver, cfg.grad_mode, cfg.lad_iterations)

    mask = pred.valid & mono.valid
    p, m = pred.values, mono.values
    if cfg.reg_target is RegTarget.ALIGNED:
        target = align.s * m + align.b
    else:
        target = m
    reg, g_res = _gradient_matching(p - np.where(mask, target, 0.0), mask, cfg.levels)
    chain = (
        cfg.reg_target is RegTarget.ALIGNED
        and cfg.grad_mode is GradMode.FULL
        and cfg.solver is Solver.LS
    )
    if chain:
        _, m_bar, s_mm = _ls_align(p, m, mask)
        g_reg = _through_alignment(g_res, m, mask, m_bar, s_mm, align.degenerate)
    else:
        g_reg = g_res

    total = weights.w_sup * sup + weights.w_ssi * ssi + weights.w_reg * reg
    grad = weights.w_sup * g_sup + weights.w_ssi * g_ssi + weights.w_reg * g_reg
    grad = np.where(pred.valid, grad, 0.0)
    return LossReport(sup, ssi, reg, total, align, grad, weights)
