"""Small-scale numerical self checks run by ``depthdistill selftest``."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import bvh, lidar, losses, oracles
from .camera import Intrinsics
from .core import DepthMap
from .meshing import grid_mesh


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _random_pair(rng, h=12, w=12):
    pv = rng.random((h, w)) > 0.1
    mv = rng.random((h, w)) > 0.1
    p = DepthMap(np.where(pv, rng.uniform(1, 10, (h, w)), 0.0), pv)
    m = DepthMap(np.where(mv, rng.uniform(1, 10, (h, w)), 0.0), mv)
    return p, m


def fd_gradient(seed=0, instances=3, tol=1e-4) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        pred, mono = _random_pair(rng)
        pv = pred.valid

        def f(x):
            return losses.ssi_loss(DepthMap(np.where(pv, x, 0.0), pv), mono)[0]

        def kinks(x):
            mask = pv & mono.valid
            _, s, b = oracles.ssi_reference(x, mono.values, mask)
            return x[mask] - s * mono.values[mask] - b

        _, grad, _ = losses.ssi_loss(pred, mono)
        h = 1e-4 * float(np.abs(pred.values[pv]).mean())
        fd = oracles.central_difference(f, pred.values, h)
        fd[~pv] = 0.0
        skip = oracles.kink_crossed(kinks, pred.values, h)
        worst = max(worst, oracles.gradient_relative_error(grad, fd, skip))
    return worst < tol, f"max relative error {worst:.2e} (tol {tol:g})"


def bvh_oracle(seed=0, rays=200) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    h, w = 24, 24
    v, u = np.mgrid[0:h, 0:w]
    z = 4 + np.sin(u / 3.0 + rng.uniform(0, 6)) + 0.5 * np.cos(v / 4.0)
    K = Intrinsics(20.0, 20.0, w / 2, h / 2)
    mesh = grid_mesh(DepthMap(z), K)
    tree = bvh.build_bvh(mesh)
    d = oracles.frustum_rays(rng, rays, K, w, h)
    tri, t = bvh.cast_rays(tree, mesh, d)
    bad = 0
    for i in range(rays):
        bt, btt = oracles.brute_force_cast(mesh.vertices, mesh.triangles, d[i])
        if bt != tri[i] or (bt >= 0 and abs(btt - t[i]) > 1e-9):
            bad += 1
    return bad == 0, f"{bad}/{rays} rays disagree with brute force ({int((tri >= 0).sum())} hits)"


def round_trip(seed=0) -> tuple[bool, str]:
    # border rays graze the mesh edge and may miss, so the frame must be
    # large enough for the border to stay under 1% of the pixels
    h, w = 240, 320
    v, u = np.mgrid[0:h, 0:w]
    K = Intrinsics(280.0, 280.0, 161.3, 118.6)
    # plane n.P = c, so 1/Z is affine in pixel coordinates
    inv = (0.1 * (u - K.cx) / K.fx + 0.2 * (v - K.cy) / K.fy + 1.0) / 6.0
    depth = DepthMap(1.0 / inv)
    scan = lidar.ScanConfig(mode="random_pixels", pixel_fraction=1.0)
    out = lidar.simulate(depth, K, scan, seed=seed)
    both = out.valid & depth.valid
    rel = np.abs(out.values[both] - depth.values[both]) / depth.values[both]
    frac = float((rel <= 1e-3).sum()) / depth.n_valid
    return frac >= 0.99, f"{frac:.4f} of pixels recovered within 1e-3"


def affine_invariance(seed=0, instances=10, tol=1e-9) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        pred, mono = _random_pair(rng, 16, 16)
        a, b = rng.uniform(0.1, 10), rng.uniform(-5, 5)
        moved = DepthMap(np.where(mono.valid, a * mono.values + b + 60.0, 0.0), mono.valid)
        base = DepthMap(np.where(mono.valid, mono.values + 60.0 / a, 0.0), mono.valid)
        # both are affine images of mono, kept positive by the +60 offsets
        l0 = losses.ssi_loss(pred, mono)[0]
        l1 = losses.ssi_loss(pred, moved)[0]
        l2 = losses.ssi_loss(pred, base)[0]
        worst = max(worst, abs(l1 - l0), abs(l2 - l0))
    return worst < tol, f"max |delta loss| {worst:.2e} (tol {tol:g})"


SUITES = {
    "fd-gradient": fd_gradient,
    "bvh-oracle": bvh_oracle,
    "round-trip": round_trip,
    "affine-invariance": affine_invariance,
}


def run_all(echo=print) -> list[SuiteResult]:
    results = []
    for name, fn in SUITES.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = SuiteResult(name, ok, detail, time.perf_counter() - t0)
        echo(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail} ({res.seconds:.2f}s)")
        results.append(res)
    return results
