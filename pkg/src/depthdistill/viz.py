"""Colour-mapped previews of depth maps."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .core import DepthMap

# Five-stop ramp indexed by normalised inverse depth: far -> near.
COLORMAP_STOPS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
COLORMAP_RGB = np.array(
    [
        [48, 18, 59],
        [70, 134, 251],
        [27, 229, 181],
        [251, 185, 56],
        [122, 4, 3],
    ],
    dtype=np.float64,
)


def colorize(depth: DepthMap) -> np.ndarray:
    """(H, W, 3) uint8 image; invalid pixels are black.

    Inverse depth is min/max normalised over valid pixels, so near surfaces
    are red and far ones purple. A constant map takes the far colour.
    """
    out = np.zeros(depth.shape + (3,), dtype=np.uint8)
    if depth.n_valid == 0:
        return out
    inv = 1.0 / depth.values[depth.valid]
    lo, hi = inv.min(), inv.max()
    t = (inv - lo) / (hi - lo) if hi > lo else np.zeros_like(inv)
    rgb = np.stack([np.interp(t, COLORMAP_STOPS, COLORMAP_RGB[:, c]) for c in range(3)], axis=-1)
    out[depth.valid] = np.rint(rgb).astype(np.uint8)
    return out


def save_png(rgb: np.ndarray, path) -> None:
    from .io import atomic_write_bytes
    import io as _stdio

    buf = _stdio.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())
