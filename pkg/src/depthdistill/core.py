"""Depth grids, valid-aware pyramids and deterministic masked reductions."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMaskError, InvalidArgumentError, InvalidDepthError

DEFAULT_LEVELS = 4
# leaves of the reduction tree handled per worker; must stay a power of two
_CHUNK = 1 << 14


@dataclass(frozen=True, eq=False)
class DepthMap:
    """H x W metric depth grid with an explicit validity mask.

    The mask is authoritative. Invalid pixels always hold 0.0 so that
    serialised maps follow the sparse-depth file convention.
    """

    values: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidArgumentError(f"depth grid must be 2-D, got shape {values.shape}")
        if self.valid is None:
            valid = np.isfinite(values) & (values > 0)
        else:
            valid = np.array(self.valid, dtype=bool)
            if valid.shape != values.shape:
                raise InvalidArgumentError(
                    f"mask shape {valid.shape} does not match values {values.shape}"
                )
            bad = valid & ~(np.isfinite(values) & (values > 0))
            if bad.any():
                v, u = np.argwhere(bad)[0]
                raise InvalidDepthError(
                    f"valid pixel (u={u}, v={v}) has depth {values[v, u]!r}"
                )
        values = np.where(valid, values, 0.0)
        values.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def coverage(self) -> float:
        return self.n_valid / self.values.size

    def scaled(self, factor: float) -> "DepthMap":
        return DepthMap(self.values * factor, self.valid)

    def __eq__(self, other):
        if not isinstance(other, DepthMap):
            return NotImplemented
        return np.array_equal(self.valid, other.valid) and np.array_equal(
            self.values, other.values
        )

    def __repr__(self):
        return f"DepthMap({self.width}x{self.height}, valid={self.n_valid})"


@dataclass(frozen=True)
class DepthPyramid:
    levels: tuple[DepthMap, ...]

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, k):
        return self.levels[k]

    def shapes(self) -> list[tuple[int, int]]:
        return [lvl.shape for lvl in self.levels]


class Reduction(enum.Enum):
    SUM = "sum"
    MEAN = "mean"


# -- pooling ----------------------------------------------------------------


def _block_index(n: int) -> tuple[np.ndarray, int]:
    out = max(n // 2, 1)
    return np.minimum(np.arange(n) // 2, out - 1), out


def pool2x2(values: np.ndarray, valid: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Valid-aware average pooling over 2x2 blocks.

    Output dims are floor(input / 2), at least 1; a trailing odd row or
    column is merged into the last block. Returns (pooled, pooled_valid,
    counts) where ``counts`` is the number of valid sources per block.
    Works for signed values, unlike ``DepthMap``.
    """
    h, w = values.shape
    rb, ho = _block_index(h)
    cb, wo = _block_index(w)
    flat = (rb[:, None] * wo + cb[None, :]).ravel()
    m = valid.ravel()
    sums = np.bincount(flat[m], weights=values.ravel()[m], minlength=ho * wo).reshape(ho, wo)
    counts = np.bincount(flat[m], minlength=ho * wo).reshape(ho, wo)
    ok = counts > 0
    pooled = np.zeros((ho, wo))
    pooled[ok] = sums[ok] / counts[ok]
    return pooled, ok, counts


def unpool_grad(grad_out: np.ndarray, valid: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`pool2x2` with respect to the fine-level values."""
    h, w = valid.shape
    rb, _ = _block_index(h)
    cb, _ = _block_index(w)
    safe = np.where(counts > 0, counts, 1)
    share = (grad_out / safe)[rb[:, None], cb[None, :]]
    return np.where(valid, share, 0.0)


def downsample(depth: DepthMap) -> DepthMap:
    pooled, ok, _ = pool2x2(depth.values, depth.valid)
    return DepthMap(pooled, ok)


def build_pyramid(depth: DepthMap, levels: int = DEFAULT_LEVELS) -> DepthPyramid:
    if levels < 1:
        raise InvalidArgumentError(f"pyramid needs at least one level, got {levels}")
    out = [depth]
    for _ in range(levels - 1):
        out.append(downsample(out[-1]))
    return DepthPyramid(tuple(out))


# -- deterministic reduction ------------------------------------------------


def _tree_sum(x: np.ndarray) -> float:
    # x.size must be a power of two; zero padding is exact under addition
    while x.size > 1:
        x = x[0::2] + x[1::2]
    return float(x[0]) if x.size else 0.0


def pairwise_sum(x: np.ndarray, workers: int = 1) -> float:
    """Sum with a fixed pairwise tree, bit-identical for any ``workers``.

    The input is zero-padded to a power of two. Parallel evaluation splits
    the tree at power-of-two aligned subtrees, so the association order is
    the same whatever the number of threads.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        return 0.0
    n = 1 << int(np.ceil(np.log2(x.size))) if x.size > 1 else 1
    padded = np.zeros(n)
    padded[: x.size] = x
    if workers <= 1 or n <= _CHUNK:
        return _tree_sum(padded)
    chunks = [padded[i : i + _CHUNK] for i in range(0, n, _CHUNK)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        partial = list(pool.map(_tree_sum, chunks))
    return _tree_sum(np.array(partial))


def masked_reduce(
    values: np.ndarray,
    valid: np.ndarray,
    mode: Reduction | str = Reduction.MEAN,
    workers: int = 1,
) -> float:
    values = np.asarray(values, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if values.shape != valid.shape:
        raise InvalidArgumentError(f"shape mismatch {values.shape} vs {valid.shape}")
    mode = Reduction(mode)
    picked = values[valid]
    total = pairwise_sum(picked, workers)
    if mode is Reduction.SUM:
        return total
    if picked.size == 0:
        raise EmptyMaskError("mean over an empty mask")
    return total / picked.size
