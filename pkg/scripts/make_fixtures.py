"""Regenerate the committed test fixtures under tests/fixtures/.

loss/   pred.dmap, sparse.png, mono.dmap (inverse depth) and golden.json,
        whose values come from the loop-based reference implementation.
viz/    depth.dmap with an invalid border and its colour-mapped golden.png.

    python scripts/make_fixtures.py
"""

import json
from pathlib import Path

import numpy as np

from depthdistill import io as dio
from depthdistill import oracles
from depthdistill.core import DepthMap
from depthdistill.viz import colorize, save_png

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def loss_fixture(rng, h=24, w=32):
    v, u = np.mgrid[0:h, 0:w]
    scene = 4.0 + 2.0 * np.sin(u / 7.0) + 0.05 * v
    pred = scene + rng.normal(0, 0.2, (h, w))
    pred_ok = rng.random((h, w)) < 0.95
    gt_ok = rng.random((h, w)) < 0.1
    # sparse gt goes through the 1/256 codec, so quantise it up front
    gt = np.rint(scene * 256.0) / 256.0
    mono_depth = 0.5 * scene + 1.0 + rng.normal(0, 0.05, (h, w))
    mono_ok = rng.random((h, w)) < 0.97
    inv = np.where(mono_ok, 1.0 / mono_depth, 0.0)

    d = OUT / "loss"
    d.mkdir(parents=True, exist_ok=True)
    dio.write_depth(DepthMap(np.where(pred_ok, pred, 0.0), pred_ok), d / "pred.dmap")
    dio.write_depth(DepthMap(np.where(gt_ok, gt, 0.0), gt_ok), d / "sparse.png")
    dio.atomic_write_bytes(d / "mono.dmap", dio.encode_float_map(inv))

    # the reference sees exactly what the CLI will read back
    pred_r = np.where(pred_ok, pred, 0.0)
    gt_r = np.where(gt_ok, gt, 0.0)
    mono_r = np.where(mono_ok, 1.0 / np.where(mono_ok, inv, 1.0), 0.0)
    total, sup, ssi, reg, s, b = oracles.combined_reference(pred_r, pred_ok, gt_r, gt_ok, mono_r, mono_ok)
    golden = {"sup": sup, "ssi": ssi, "reg": reg, "total": total, "s": s, "b": b}
    (d / "golden.json").write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")


def viz_fixture(rng, h=20, w=30):
    v, u = np.mgrid[0:h, 0:w]
    z = 2.0 + u / 4.0 + 0.3 * np.cos(v / 3.0)
    ok = np.zeros((h, w), dtype=bool)
    ok[2:-2, 2:-2] = True
    depth = DepthMap(np.where(ok, z, 0.0), ok)
    d = OUT / "viz"
    d.mkdir(parents=True, exist_ok=True)
    dio.write_depth(depth, d / "depth.dmap")
    save_png(colorize(depth), d / "golden.png")


def main():
    rng = np.random.default_rng(20240611)
    loss_fixture(rng)
    viz_fixture(rng)
    print(f"fixtures written to {OUT}")


if __name__ == "__main__":
    main()
