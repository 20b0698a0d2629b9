"""Depth file codecs and the pipeline configuration file.

``png16_kitti``
    16-bit single-channel PNG, depth_m = raw / 256, raw 0 = no data.

``float_map``
    Little-endian binary grid::

        magic   8 bytes  b"DDFMAP1\\0"
        width   uint32
        height  uint32
        nodata  float64
        values  float64[height * width], row-major

    A pixel is valid when its value differs from ``nodata`` and is finite
    and positive.
"""

from __future__ import annotations

import dataclasses
import enum
import io as _stdio
import os
import struct
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import IntrinsicsRange
from .core import DepthMap
from .errors import (
    AllInvalidError,
    CodecMismatchError,
    ConfigError,
    DepthDistillError,
    DepthIOError,
    DepthRangeError,
    TruncatedFileError,
)
from .lidar import DepthKind, ScanConfig
from .losses import LossConfig, LossWeights
from .meshing import MeshingConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
FLOAT_MAGIC = b"DDFMAP1\0"
_FLOAT_HEADER = struct.Struct("<8sIId")
KITTI_SCALE = 256.0


class Codec(str, enum.Enum):
    PNG16_KITTI = "png16_kitti"
    FLOAT_MAP = "float_map"


class MonoSpace(str, enum.Enum):
    DEPTH = "depth"
    INVERSE_DEPTH = "inverse_depth"


def codec_for_path(path) -> Codec:
    return Codec.PNG16_KITTI if str(path).lower().endswith(".png") else Codec.FLOAT_MAP


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DepthIOError(f"cannot read {path}: {exc.strerror or exc}") from exc


# -- float grids ------------------------------------------------------------------


def encode_float_map(values: np.ndarray, valid: np.ndarray | None = None, nodata: float = 0.0) -> bytes:
    values = np.asarray(values, dtype=np.float64)
    if valid is not None:
        values = np.where(valid, values, nodata)
    h, w = values.shape
    return _FLOAT_HEADER.pack(FLOAT_MAGIC, w, h, nodata) + values.astype("<f8").tobytes()


def decode_float_map(data: bytes, name: str = "<bytes>") -> tuple[np.ndarray, float]:
    if len(data) < 8 or data[:8] != FLOAT_MAGIC:
        raise CodecMismatchError(f"{name}: not a float_map file (bad magic)")
    if len(data) < _FLOAT_HEADER.size:
        raise TruncatedFileError(f"{name}: float_map header truncated")
    _, w, h, nodata = _FLOAT_HEADER.unpack_from(data)
    need = _FLOAT_HEADER.size + 8 * w * h
    if len(data) < need:
        raise TruncatedFileError(f"{name}: expected {need} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", count=w * h, offset=_FLOAT_HEADER.size)
    return values.reshape(h, w).astype(np.float64), nodata


def write_float_grid(values: np.ndarray, path, nodata: float = float("nan")) -> None:
    """Dump an arbitrary float grid (e.g. a gradient) as a float_map."""
    atomic_write_bytes(path, encode_float_map(values, None, nodata))


def read_float_grid(path) -> np.ndarray:
    values, _ = decode_float_map(_read_bytes(path), str(path))
    return values


# -- png16 -------------------------------------------------------------------


def encode_png16(depth: DepthMap) -> bytes:
    raw = np.rint(depth.values * KITTI_SCALE)
    if np.any(raw[depth.valid] > 65535):
        worst = float(depth.values[depth.valid].max())
        raise DepthRangeError(f"depth {worst} m does not fit the 16-bit /256 encoding (max 255.996 m)")
    raw = np.where(depth.valid, np.maximum(raw, 1), 0).astype(np.uint16)
    buf = _stdio.BytesIO()
    Image.fromarray(raw).save(buf, format="PNG")
    return buf.getvalue()


def decode_png16(data: bytes, name: str = "<bytes>") -> np.ndarray:
    if data[:8] != PNG_MAGIC:
        raise CodecMismatchError(f"{name}: not a PNG file (bad magic)")
    try:
        img = Image.open(_stdio.BytesIO(data))
        img.load()
    except (OSError, SyntaxError, ValueError) as exc:
        raise TruncatedFileError(f"{name}: unreadable PNG ({exc})") from exc
    if img.mode not in ("I;16", "I;16B", "I;16L", "I"):
        raise CodecMismatchError(f"{name}: expected a 16-bit single-channel PNG, got mode {img.mode}")
    return np.array(img).astype(np.int64)


# -- DepthMap level ---------------------------------------------------------------


def read_depth(
    path,
    codec: Codec | str | None = None,
    mono_space: MonoSpace | str = MonoSpace.DEPTH,
) -> DepthMap:
    """Load a depth map; ``codec`` defaults from the file extension.

    With ``mono_space='inverse_depth'`` positive values are taken as
    inverse depth and converted with 1 / value.
    """
    codec = Codec(codec) if codec is not None else codec_for_path(path)
    data = _read_bytes(path)
    if codec is Codec.PNG16_KITTI:
        raw = decode_png16(data, str(path))
        valid = raw > 0
        values = raw / KITTI_SCALE
    else:
        values, nodata = decode_float_map(data, str(path))
        valid = np.isfinite(values) & (values > 0)
        if not np.isnan(nodata):
            valid &= values != nodata
    if MonoSpace(mono_space) is MonoSpace.INVERSE_DEPTH:
        with np.errstate(divide="ignore", over="ignore"):
            values = np.where(valid, 1.0 / np.where(valid, values, 1.0), 0.0)
        valid &= np.isfinite(values) & (values > 0)
    if not valid.any():
        raise AllInvalidError(f"{path}: no valid pixel")
    return DepthMap(np.where(valid, values, 0.0), valid)


def write_depth(depth: DepthMap, path, codec: Codec | str | None = None) -> None:
    codec = Codec(codec) if codec is not None else codec_for_path(path)
    if codec is Codec.PNG16_KITTI:
        data = encode_png16(depth)
    else:
        data = encode_float_map(depth.values, depth.valid, 0.0)
    try:
        atomic_write_bytes(path, data)
    except OSError as exc:
        raise DepthIOError(f"cannot write {path}: {exc}") from exc


# -- configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    intrinsics: IntrinsicsRange = field(default_factory=IntrinsicsRange)
    scan: ScanConfig = field(default_factory=ScanConfig)
    meshing: MeshingConfig = field(default_factory=MeshingConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    loss: LossConfig = field(default_factory=LossConfig)
    depth_kind: DepthKind = DepthKind.Z_DEPTH
    leaf_size: int = 4
    mono_space: MonoSpace = MonoSpace.INVERSE_DEPTH
    export_mesh: bool = False
    workers: int = 1


# key -> (section, field, expected python types)
_KEYS = {
    "seed": (None, "seed", (int,)),
    "fx_range": ("intrinsics", "fx_range", (list,)),
    "fy_range": ("intrinsics", "fy_range", (list,)),
    "principal_point_jitter": ("intrinsics", "principal_point_jitter", (int, float)),
    "lock_aspect": ("intrinsics", "lock_aspect", (bool,)),
    "n_beams": ("scan", "n_beams", (int,)),
    "vertical_fov": ("scan", "vertical_fov", (list,)),
    "azimuth_step": ("scan", "azimuth_step", (int, float)),
    "scan_mode": ("scan", "mode", (str,)),
    "dropout": ("scan", "dropout", (int, float)),
    "pixel_fraction": ("scan", "pixel_fraction", (int, float)),
    "discontinuity_ratio": ("meshing", "discontinuity_ratio", (int, float)),
    "area_epsilon": ("meshing", "area_epsilon", (int, float)),
    "w_sup": ("weights", "w_sup", (int, float)),
    "w_ssi": ("weights", "w_ssi", (int, float)),
    "w_reg": ("weights", "w_reg", (int, float)),
    "solver": ("loss", "solver", (str,)),
    "grad_mode": ("loss", "grad_mode", (str,)),
    "pyramid_levels": ("loss", "levels", (int,)),
    "reg_target": ("loss", "reg_target", (str,)),
    "depth_kind": (None, "depth_kind", (str,)),
    "leaf_size": (None, "leaf_size", (int,)),
    "mono_space": (None, "mono_space", (str,)),
    "export_mesh": (None, "export_mesh", (bool,)),
    "workers": (None, "workers", (int,)),
}
_PAIRS = {"fx_range", "fy_range", "vertical_fov"}
_ENUMS = {"depth_kind": DepthKind, "mono_space": MonoSpace}


def config_from_mapping(raw: dict) -> PipelineConfig:
    sections: dict[str | None, dict] = {}
    for key, value in raw.items():
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        section, name, types = _KEYS[key]
        # bool is an int subclass; keep them apart
        if isinstance(value, bool) and bool not in types:
            raise ConfigError(key, f"expected {types[0].__name__}, got bool")
        if not isinstance(value, types):
            raise ConfigError(key, f"expected {'/'.join(t.__name__ for t in types)}, got {type(value).__name__}")
        if key in _PAIRS:
            if len(value) != 2 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
                raise ConfigError(key, "expected a two-number list [lower, upper]")
            value = (float(value[0]), float(value[1]))
        elif isinstance(value, int) and float in types:
            value = float(value)
        sections.setdefault(section, {})[name] = value

    top = dict(sections.pop(None, {}))
    for key, enum_cls in _ENUMS.items():
        if key in top:
            try:
                top[key] = enum_cls(top[key])
            except ValueError:
                raise ConfigError(key, f"must be one of {[e.value for e in enum_cls]}") from None
    for key in ("leaf_size", "workers"):
        if key in top and top[key] < 1:
            raise ConfigError(key, "must be >= 1")

    defaults = PipelineConfig()
    for section, values in sections.items():
        base = getattr(defaults, section)
        try:
            top[section] = dataclasses.replace(base, **values)
        except (ValueError, DepthDistillError) as exc:
            raise ConfigError(_culprit(section, base, values), str(exc)) from None
    return dataclasses.replace(defaults, **top)


def _culprit(section, base, values) -> str:
    """Config key whose value alone violates the section's invariants."""
    reverse = {(s, f): k for k, (s, f, _) in _KEYS.items()}
    for fld, value in values.items():
        try:
            dataclasses.replace(base, **{fld: value})
        except (ValueError, DepthDistillError):
            return reverse[(section, fld)]
    return ", ".join(reverse[(section, fld)] for fld in values)


def parse_config_text(text: str) -> PipelineConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<syntax>", str(exc)) from None
    return config_from_mapping(raw)


def parse_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DepthIOError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config_text(text)


def config_to_mapping(cfg: PipelineConfig) -> dict:
    """Inverse of :func:`config_from_mapping` (``None`` ranges omitted)."""
    out = {}
    for key, (section, name, _) in _KEYS.items():
        obj = cfg if section is None else getattr(cfg, section)
        value = getattr(obj, name)
        if value is None:
            continue
        if isinstance(value, enum.Enum):
            value = value.value
        if isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out
