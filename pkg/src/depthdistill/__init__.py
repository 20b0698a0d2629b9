"""LiDAR-scan simulation from monocular pseudo-depth, scale/shift-invariant
distillation losses and depth-completion metrics."""

from .bvh import Bvh, RayHit, build_bvh, cast, cast_rays
from .camera import Intrinsics, IntrinsicsRange, project, sample_intrinsics, unproject
from .core import DepthMap, DepthPyramid, Reduction, build_pyramid, downsample, masked_reduce
from .lidar import DepthKind, ScanConfig, ScanMode, ScanPattern, gen_scan_pattern, render_sparse, simulate
from .losses import (
    AlignmentParams,
    LossConfig,
    LossReport,
    LossWeights,
    combined_loss,
    gradient_matching,
    l1_masked,
    ssi_align,
    ssi_loss,
)
from .meshing import MeshingConfig, TriangleMesh, export_mesh, grid_mesh
from .metrics import MetricsReport, evaluate

__version__ = "0.1.0"

__all__ = [
    "AlignmentParams",
    "Bvh",
    "DepthKind",
    "DepthMap",
    "DepthPyramid",
    "Intrinsics",
    "IntrinsicsRange",
    "LossConfig",
    "LossReport",
    "LossWeights",
    "MeshingConfig",
    "MetricsReport",
    "RayHit",
    "Reduction",
    "ScanConfig",
    "ScanMode",
    "ScanPattern",
    "TriangleMesh",
    "build_bvh",
    "build_pyramid",
    "cast",
    "cast_rays",
    "combined_loss",
    "downsample",
    "evaluate",
    "export_mesh",
    "gen_scan_pattern",
    "gradient_matching",
    "grid_mesh",
    "l1_masked",
    "masked_reduce",
    "project",
    "render_sparse",
    "sample_intrinsics",
    "ssi_align",
    "simulate",
    "ssi_loss",
    "unproject",
]
