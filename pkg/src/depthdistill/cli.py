"""Command-line entry point: ``depthdistill {gen,loss,eval,viz,selftest}``.

Exit codes: 0 success, 2 usage/config, 3 I/O, 4 data or empty mask,
5 self-test failure, 6 too few pixels for scale/shift alignment.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from PIL import Image

from . import io as dio
from .camera import sample_intrinsics
from .errors import DataError, DepthDistillError, DepthIOError
from .lidar import simulate_detailed
from .losses import combined_loss
from .meshing import mesh_to_obj
from .metrics import Units, evaluate, mean_report
from .viz import colorize, save_png

CONFIG_ENV = "DEPTHDISTILL_CONFIG"
EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_SELFTEST = 0, 2, 3, 4, 5

log = logging.getLogger("depthdistill")

SPARSE_NAME = "sparse.png"
DENSE_NAME = "dense.dmap"
MESH_NAME = "mesh.obj"
MANIFEST_NAME = "manifest.json"


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_config(path):
    path = path or os.environ.get(CONFIG_ENV)
    return dio.parse_config(path)


# -- gen -------------------------------------------------------------------------


def _image_dims(path) -> tuple[int, int]:
    try:
        with Image.open(path) as img:
            return img.size
    except OSError as exc:
        raise DepthIOError(f"cannot read image {path}: {exc}") from exc


def generate_one(image_path, mono_path, cfg: dio.PipelineConfig, seed: int, workers: int = 1) -> dict[str, bytes]:
    """Run the simulation for one image and return the output files in memory."""
    width, height = _image_dims(image_path)
    mono = dio.read_depth(mono_path, mono_space=cfg.mono_space)
    if mono.shape != (height, width):
        raise DataError(f"{mono_path}: depth is {mono.width}x{mono.height}, image {image_path} is {width}x{height}")
    K = sample_intrinsics(seed, cfg.intrinsics, width, height)
    sim = simulate_detailed(
        mono, K, cfg.scan, cfg.meshing, seed,
        depth_kind=cfg.depth_kind, leaf_size=cfg.leaf_size, workers=workers,
    )
    files = {
        SPARSE_NAME: dio.encode_png16(sim.sparse),
        DENSE_NAME: dio.encode_float_map(mono.values, mono.valid),
    }
    if cfg.export_mesh:
        files[MESH_NAME] = mesh_to_obj(sim.mesh).encode()
    manifest = {
        "seed": seed,
        "image": {"name": Path(image_path).name, "width": width, "height": height},
        "mono": Path(mono_path).name,
        "intrinsics": K.as_dict(),
        "scan": dio.config_to_mapping(cfg),
        "coverage": sim.sparse.coverage(),
        "n_rays": len(sim.pattern),
        "n_hits": sim.n_hits,
        "n_valid": sim.sparse.n_valid,
        "n_triangles": len(sim.mesh),
        "depth_kind": cfg.depth_kind.value,
        "outputs": sorted(files),
    }
    manifest["scan"].pop("workers", None)
    files[MANIFEST_NAME] = _dump(manifest).encode()
    return files


def _commit(out_dir: Path, files: dict[str, bytes]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out_dir))
    try:
        for name, data in files.items():
            (stage / name).write_bytes(data)
        for name in files:
            os.replace(stage / name, out_dir / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _pair_inputs(image_dir: Path, mono_dir: Path) -> list[tuple[Path, Path]]:
    images = {p.stem: p for p in sorted(image_dir.iterdir()) if p.is_file()}
    monos = {p.stem: p for p in sorted(mono_dir.iterdir()) if p.is_file()}
    if set(images) != set(monos):
        missing = sorted(set(images) ^ set(monos))
        raise DataError(f"image and mono directories do not pair up: {missing}")
    return [(images[k], monos[k]) for k in sorted(images)]


def cmd_gen(args) -> int:
    cfg = _load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    workers = args.threads or cfg.workers
    image, mono, out = Path(args.image), Path(args.mono), Path(args.out_dir)
    if image.is_dir() or mono.is_dir():
        pairs = _pair_inputs(image, mono)
        results = [
            (img.stem, generate_one(img, mon, cfg, seed + i, workers)) for i, (img, mon) in enumerate(pairs)
        ]
        for stem, files in results:
            _commit(out / stem, files)
            log.info("wrote %s", out / stem)
        return EXIT_OK
    files = generate_one(image, mono, cfg, seed, workers)
    _commit(out, files)
    print(files[MANIFEST_NAME].decode(), end="")
    return EXIT_OK


# -- loss ------------------------------------------------------------------------


def cmd_loss(args) -> int:
    cfg = _load_config(args.config)
    pred = dio.read_depth(args.pred)
    gt = dio.read_depth(args.sparse_gt)
    mono = dio.read_depth(args.mono, mono_space=cfg.mono_space)
    report = combined_loss(pred, gt, mono, cfg.weights, cfg.loss)
    if args.grad_out:
        dio.write_float_grid(report.grad_total, args.grad_out)
    print(_dump(report.to_dict()), end="")
    return EXIT_OK


# -- eval ------------------------------------------------------------------------


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise DepthIOError(f"{d} is not a directory")
    preds = sorted(p.name for p in pred_dir.iterdir() if p.is_file())
    gts = sorted(p.name for p in gt_dir.iterdir() if p.is_file())
    if preds != gts:
        raise DataError(f"file lists differ: {sorted(set(preds) ^ set(gts))}")
    if not preds:
        raise DataError(f"{pred_dir} contains no files")
    per_image = []
    for name in preds:
        report = evaluate(dio.read_depth(pred_dir / name), dio.read_depth(gt_dir / name), units=args.units)
        per_image.append((name, report))
    mean = mean_report([r for _, r in per_image])
    out = {
        "per_image": [{"name": n, **r.to_dict()} for n, r in per_image],
        "mean": mean.to_dict(),
    }
    print(_dump(out), end="")
    return EXIT_OK


# -- viz / selftest ---------------------------------------------------------------


def cmd_viz(args) -> int:
    save_png(colorize(dio.read_depth(args.depth)), args.out_png)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all()
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


# -- entry -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthdistill", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="simulate a LiDAR scan from monocular pseudo-depth")
    p.add_argument("image", help="RGB image, or a directory of images")
    p.add_argument("mono", help="monocular depth (float_map), or a directory of them")
    p.add_argument("out_dir")
    p.add_argument("--config", help=f"TOML config (default: ${CONFIG_ENV})")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, help="ray-casting threads")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("loss", help="evaluate the combined distillation loss")
    p.add_argument("pred")
    p.add_argument("sparse_gt")
    p.add_argument("mono")
    p.add_argument("--config")
    p.add_argument("--grad-out", help="write d(total)/d(pred) as a float_map")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", help="depth-completion metrics over matching directories")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--units", choices=[u.value for u in Units], default=Units.KITTI_MM.value)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viz", help="colour-map a depth file to PNG")
    p.add_argument("depth")
    p.add_argument("out_png")
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("selftest", help="run the numerical self checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except DepthDistillError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
