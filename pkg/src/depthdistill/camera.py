"""Pinhole camera: intrinsics sampling, unprojection and projection.

Pixel centres sit at integer coordinates, the camera is at the origin
looking down +Z with X right and Y down. No distortion, no extrinsics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DepthMap
from .errors import BehindCameraError, InvalidArgumentError

# focal length bounds as a fraction of image width, used when no explicit
# pixel range is configured
DEFAULT_FOCAL_FRACTION = (0.4, 0.6)


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgumentError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (np.isfinite(self.cx) and np.isfinite(self.cy)):
            raise InvalidArgumentError("principal point must be finite")
        if not (np.isfinite(self.fx) and np.isfinite(self.fy)):
            raise InvalidArgumentError("focal lengths must be finite")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def as_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}


def _check_interval(name, interval):
    if interval is None:
        return
    lo, hi = interval
    if not lo > 0:
        raise InvalidArgumentError(f"{name} lower bound must be > 0, got {lo}")
    if hi < lo:
        raise InvalidArgumentError(f"{name} upper bound {hi} is below lower bound {lo}")


@dataclass(frozen=True)
class IntrinsicsRange:
    """Sampling ranges for random intrinsics.

    ``fx_range``/``fy_range`` are pixel intervals; ``None`` means
    ``DEFAULT_FOCAL_FRACTION`` times the image width.
    """

    fx_range: tuple[float, float] | None = None
    fy_range: tuple[float, float] | None = None
    principal_point_jitter: float = 0.05
    lock_aspect: bool = True

    def __post_init__(self):
        _check_interval("fx_range", self.fx_range)
        _check_interval("fy_range", self.fy_range)
        if not 0 <= self.principal_point_jitter < 0.5:
            raise InvalidArgumentError(
                f"principal_point_jitter must lie in [0, 0.5), got {self.principal_point_jitter}"
            )

    def resolved(self, width: int) -> tuple[tuple[float, float], tuple[float, float]]:
        default = (DEFAULT_FOCAL_FRACTION[0] * width, DEFAULT_FOCAL_FRACTION[1] * width)
        fx = tuple(self.fx_range) if self.fx_range is not None else default
        fy = tuple(self.fy_range) if self.fy_range is not None else fx
        return fx, fy


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3) metres
    source_pixel: np.ndarray  # (N, 2) integer (u, v)

    def __len__(self):
        return len(self.points)


def sample_intrinsics(seed: int, rng_range: IntrinsicsRange, width: int, height: int) -> Intrinsics:
    if width < 1 or height < 1:
        raise InvalidArgumentError(f"image dims must be positive, got {width}x{height}")
    rng = np.random.default_rng(seed)
    (fx_lo, fx_hi), (fy_lo, fy_hi) = rng_range.resolved(width)
    fx = rng.uniform(fx_lo, fx_hi)
    fy = fx if rng_range.lock_aspect else rng.uniform(fy_lo, fy_hi)
    j = rng_range.principal_point_jitter
    cx = width / 2 + rng.uniform(-j * width, j * width)
    cy = height / 2 + rng.uniform(-j * height, j * height)
    return Intrinsics(float(fx), float(fy), float(cx), float(cy))


def unproject(depth: DepthMap, K: Intrinsics) -> PointCloud:
    v, u = np.nonzero(depth.valid)
    z = depth.values[v, u]
    x = (u - K.cx) * z / K.fx
    y = (v - K.cy) * z / K.fy
    return PointCloud(np.column_stack([x, y, z]), np.column_stack([u, v]))


def unproject_grid(depth: DepthMap, K: Intrinsics) -> np.ndarray:
    """(H, W, 3) camera-frame points for every pixel, zeros where invalid."""
    h, w = depth.shape
    v, u = np.mgrid[0:h, 0:w]
    z = depth.values
    return np.stack([(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z], axis=-1)


def project(point, K: Intrinsics) -> tuple[float, float, float]:
    x, y, z = (float(c) for c in point)
    if not z > 0:
        raise BehindCameraError(f"point has Z={z}, must be in front of the camera")
    return K.fx * x / z + K.cx, K.fy * y / z + K.cy, z


def project_points(points: np.ndarray, K: Intrinsics) -> np.ndarray:
    """Vectorised :func:`project`; returns (N, 3) columns u, v, depth."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    if np.any(~(z > 0)):
        raise BehindCameraError("at least one point has Z <= 0")
    return np.column_stack([K.fx * points[:, 0] / z + K.cx, K.fy * points[:, 1] / z + K.cy, z])
