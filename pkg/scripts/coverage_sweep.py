"""Rendered coverage of the default scan as a function of focal length.

Used to calibrate the default focal range: a fronto-parallel wall fills
the frame, so every in-frustum ray hits and coverage depends only on the
scan geometry and the intrinsics.

    python scripts/coverage_sweep.py --width 1216 --height 352
"""

import argparse
import time

import numpy as np

from depthdistill.camera import Intrinsics
from depthdistill.core import DepthMap
from depthdistill.lidar import ScanConfig, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--width", type=int, default=1216)
    ap.add_argument("--height", type=int, default=352)
    ap.add_argument("--depth", type=float, default=20.0, help="wall distance in metres")
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.3, 0.4, 0.45, 0.5, 0.55, 0.6, 0.8, 1.0, 1.4])
    ap.add_argument("--beams", type=int, nargs="+", default=[64])
    args = ap.parse_args()

    wall = DepthMap(np.full((args.height, args.width), args.depth))
    print(f"{'beams':>5} {'f/W':>5} {'fx':>7} {'coverage':>9} {'time':>6}")
    for n_beams in args.beams:
        for frac in args.fractions:
            f = frac * args.width
            K = Intrinsics(f, f, args.width / 2, args.height / 2)
            t0 = time.perf_counter()
            cov = simulate(wall, K, ScanConfig(n_beams=n_beams)).coverage()
            print(f"{n_beams:>5} {frac:>5.2f} {f:>7.1f} {cov:>9.4f} {time.perf_counter() - t0:>5.1f}s")


if __name__ == "__main__":
    main()
