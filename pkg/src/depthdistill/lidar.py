"""LiDAR scan simulation: ray patterns, mesh casting and sparse rendering."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .bvh import DEFAULT_LEAF_SIZE, Bvh, build_bvh, cast_rays
from .camera import Intrinsics
from .core import DepthMap
from .errors import EmptyPatternError, InvalidArgumentError
from .meshing import MeshingConfig, TriangleMesh, grid_mesh


class ScanMode(str, enum.Enum):
    BEAMS = "beams"
    RANDOM_PIXELS = "random_pixels"


class DepthKind(str, enum.Enum):
    Z_DEPTH = "z_depth"
    RANGE = "range"


@dataclass(frozen=True)
class ScanConfig:
    """Multi-beam spinning LiDAR model (HDL-64-like defaults).

    Elevation is measured up from the camera's horizontal plane, azimuth to
    the right of the optical axis. ``pixel_fraction`` is only used by the
    ``random_pixels`` mode.
    """

    n_beams: int = 64
    vertical_fov: tuple[float, float] = (-24.9, 2.0)
    azimuth_step: float = 0.2
    mode: ScanMode = ScanMode.BEAMS
    dropout: float = 0.0
    pixel_fraction: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "mode", ScanMode(self.mode))
        object.__setattr__(self, "vertical_fov", tuple(float(x) for x in self.vertical_fov))
        if self.n_beams < 1:
            raise InvalidArgumentError(f"n_beams must be >= 1, got {self.n_beams}")
        if not self.azimuth_step > 0:
            raise InvalidArgumentError(f"azimuth_step must be > 0, got {self.azimuth_step}")
        if not 0 <= self.dropout < 1:
            raise InvalidArgumentError(f"dropout must lie in [0, 1), got {self.dropout}")
        lo, hi = self.vertical_fov
        if hi < lo or not (-90 < lo and hi < 90):
            raise InvalidArgumentError(f"vertical_fov must be an ordered interval inside (-90, 90), got {self.vertical_fov}")
        if not 0 < self.pixel_fraction <= 1:
            raise InvalidArgumentError(f"pixel_fraction must lie in (0, 1], got {self.pixel_fraction}")


@dataclass(frozen=True, eq=False)
class ScanPattern:
    rays: np.ndarray  # (N, 3) unit directions
    beam_id: np.ndarray  # (N,)

    def __len__(self):
        return len(self.rays)


@dataclass(frozen=True, eq=False)
class Simulation:
    sparse: DepthMap
    mesh: TriangleMesh
    bvh: Bvh
    pattern: ScanPattern
    n_hits: int


def _in_frame(u, v, width, height):
    return (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)


def _beam_rays(cfg: ScanConfig, K: Intrinsics, width: int, height: int):
    lo, hi = cfg.vertical_fov
    elev = np.array([(lo + hi) / 2]) if cfg.n_beams == 1 else np.linspace(lo, hi, cfg.n_beams)
    # azimuth range is the same for every beam: u = fx * tan(az) + cx
    az_min = np.degrees(np.arctan2(0 - K.cx, K.fx))
    az_max = np.degrees(np.arctan2(width - 1 - K.cx, K.fx))
    k0 = int(np.ceil(az_min / cfg.azimuth_step - 1e-9))
    k1 = int(np.floor(az_max / cfg.azimuth_step + 1e-9))
    if k1 < k0:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    az = np.radians(np.arange(k0, k1 + 1) * cfg.azimuth_step)
    el = np.radians(elev)
    e, a = np.meshgrid(el, az, indexing="ij")
    d = np.stack([np.cos(e) * np.sin(a), -np.sin(e), np.cos(e) * np.cos(a)], axis=-1).reshape(-1, 3)
    beam = np.repeat(np.arange(len(elev)), len(az))
    u = K.fx * d[:, 0] / d[:, 2] + K.cx
    v = K.fy * d[:, 1] / d[:, 2] + K.cy
    keep = _in_frame(u, v, width, height)
    return d[keep], beam[keep]


def _pixel_rays(cfg: ScanConfig, K: Intrinsics, width: int, height: int, rng):
    n_px = width * height
    n = max(1, int(round(cfg.pixel_fraction * n_px)))
    pick = np.arange(n_px) if n >= n_px else np.sort(rng.choice(n_px, size=n, replace=False))
    u, v = pick % width, pick // width
    d = np.column_stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones(len(pick))])
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d, v.astype(np.int64)


def gen_scan_pattern(cfg: ScanConfig, K: Intrinsics, width: int, height: int, seed: int = 0) -> ScanPattern:
    rng = np.random.default_rng(seed)
    if cfg.mode is ScanMode.BEAMS:
        rays, beam = _beam_rays(cfg, K, width, height)
    else:
        rays, beam = _pixel_rays(cfg, K, width, height, rng)
    if len(rays) == 0:
        raise EmptyPatternError(f"no scan ray falls inside the {width}x{height} frustum")
    if cfg.dropout > 0:
        keep = rng.random(len(rays)) >= cfg.dropout
        rays, beam = rays[keep], beam[keep]
    return ScanPattern(np.ascontiguousarray(rays), beam)


def render_sparse(
    hit_points: np.ndarray,
    K: Intrinsics,
    width: int,
    height: int,
    depth_kind: DepthKind | str = DepthKind.Z_DEPTH,
) -> DepthMap:
    """Splat hit points onto the nearest pixel, keeping the minimum value.

    Rows containing NaN (misses) are ignored.
    """
    depth_kind = DepthKind(depth_kind)
    p = np.asarray(hit_points, dtype=np.float64).reshape(-1, 3)
    p = p[np.isfinite(p).all(axis=1) & (p[:, 2] > 0)]
    u = np.rint(K.fx * p[:, 0] / p[:, 2] + K.cx).astype(np.int64)
    v = np.rint(K.fy * p[:, 1] / p[:, 2] + K.cy).astype(np.int64)
    inside = (u >= 0) & (u < width) & (v >= 0) & (v < height)
    value = p[:, 2] if depth_kind is DepthKind.Z_DEPTH else np.linalg.norm(p, axis=1)
    grid = np.full(height * width, np.inf)
    np.minimum.at(grid, v[inside] * width + u[inside], value[inside])
    grid = grid.reshape(height, width)
    valid = np.isfinite(grid)
    return DepthMap(np.where(valid, grid, 0.0), valid)


def simulate_detailed(
    depth: DepthMap,
    K: Intrinsics,
    scan: ScanConfig | None = None,
    mesh_cfg: MeshingConfig | None = None,
    seed: int = 0,
    depth_kind: DepthKind | str = DepthKind.Z_DEPTH,
    image_dims: tuple[int, int] | None = None,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    workers: int = 1,
) -> Simulation:
    scan = scan or ScanConfig()
    width, height = image_dims if image_dims is not None else (depth.width, depth.height)
    mesh = grid_mesh(depth, K, mesh_cfg)
    bvh = build_bvh(mesh, leaf_size)
    pattern = gen_scan_pattern(scan, K, width, height, seed)
    tri, t = cast_rays(bvh, mesh, pattern.rays, workers=workers)
    points = pattern.rays * t[:, None]
    sparse = render_sparse(points, K, width, height, depth_kind)
    return Simulation(sparse, mesh, bvh, pattern, int((tri >= 0).sum()))


def simulate(
    depth: DepthMap,
    K: Intrinsics,
    scan: ScanConfig | None = None,
    mesh_cfg: MeshingConfig | None = None,
    seed: int = 0,
    **kwargs,
) -> DepthMap:
    """Dense depth -> mesh -> BVH -> scan pattern -> cast -> sparse depth."""
    return simulate_detailed(depth, K, scan, mesh_cfg, seed, **kwargs).sparse
