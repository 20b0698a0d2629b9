"""Depth-completion error metrics (KITTI and NYU conventions)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DepthMap, Reduction, masked_reduce
from .errors import EmptyMaskError, InvalidArgumentError, InvalidDepthError

DEFAULT_THRESHOLDS = (1.25, 1.25**2, 1.25**3)


class Units(str, enum.Enum):
    KITTI_MM = "kitti_mm"  # rmse/mae in mm, irmse/imae in 1/km
    NYU_M = "nyu_m"  # rmse/mae in m, irmse/imae in 1/m


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    irmse: float
    imae: float
    rel: float
    delta: dict = field(default_factory=dict)
    n_valid: int = 0
    units: Units = Units.KITTI_MM

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "irmse": self.irmse,
            "imae": self.imae,
            "rel": self.rel,
            "delta": {repr(float(k)): v for k, v in self.delta.items()},
            "n_valid": self.n_valid,
            "units": self.units.value,
        }


def evaluate(
    pred: DepthMap,
    gt: DepthMap,
    thresholds=DEFAULT_THRESHOLDS,
    units: Units | str = Units.KITTI_MM,
) -> MetricsReport:
    """Errors over pixels valid in both maps; ``rel`` divides by ground truth."""
    units = Units(units)
    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"shape mismatch {pred.shape} vs {gt.shape}")
    mask = pred.valid & gt.valid
    n = int(mask.sum())
    if n == 0:
        raise EmptyMaskError("prediction and ground truth share no valid pixel")
    p = np.where(mask, pred.values, 1.0)
    g = np.where(mask, gt.values, 1.0)
    if np.any(p <= 0) or np.any(g <= 0):
        raise InvalidDepthError("evaluation requires positive depths on the joint mask")

    scale = 1000.0 if units is Units.KITTI_MM else 1.0
    err = p - g
    ierr = 1.0 / p - 1.0 / g
    mean = lambda x: masked_reduce(x, mask, Reduction.MEAN)  # noqa: E731
    ratio = np.maximum(p / g, g / p)
    delta = {float(t): mean((ratio < t).astype(np.float64)) for t in sorted(thresholds)}
    return MetricsReport(
        rmse=math.sqrt(mean(err * err)) * scale,
        mae=mean(np.abs(err)) * scale,
        irmse=math.sqrt(mean(ierr * ierr)) * scale,
        imae=mean(np.abs(ierr)) * scale,
        rel=mean(np.abs(err) / g),
        delta=delta,
        n_valid=n,
        units=units,
    )


def mean_report(reports: list[MetricsReport]) -> MetricsReport:
    """Per-image arithmetic mean; ``n_valid`` is the pooled pixel count."""
    if not reports:
        raise EmptyMaskError("no reports to average")
    units = {r.units for r in reports}
    if len(units) != 1:
        raise InvalidArgumentError("cannot average reports with different units")
    k = len(reports)
    keys = list(reports[0].delta)
    return MetricsReport(
        rmse=sum(r.rmse for r in reports) / k,
        mae=sum(r.mae for r in reports) / k,
        irmse=sum(r.irmse for r in reports) / k,
        imae=sum(r.imae for r in reports) / k,
        rel=sum(r.rel for r in reports) / k,
        delta={t: sum(r.delta[t] for r in reports) / k for t in keys},
        n_valid=sum(r.n_valid for r in reports),
        units=units.pop(),
    )
