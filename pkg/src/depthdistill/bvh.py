"""Bounding-volume hierarchy over triangles and watertight ray casting.

The hierarchy is a flat array of axis-aligned boxes built by median split
on the longest axis of the centroid bounds. Traversal and intersection run
in numba kernels that release the GIL, so batches of rays can be cast from
a thread pool without changing any result.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .meshing import TriangleMesh

T_EPSILON = 1e-6
TIE_EPSILON = 1e-12
DEFAULT_LEAF_SIZE = 4
# relative padding applied to node boxes so slab tests stay conservative
_BOX_PAD = 1e-9
_STACK = 128


@dataclass(frozen=True, eq=False)
class Bvh:
    lo: np.ndarray  # (N, 3) node box minima
    hi: np.ndarray  # (N, 3) node box maxima
    left: np.ndarray  # (N,) child index, -1 for leaves
    right: np.ndarray
    start: np.ndarray  # (N,) first slot in ``order`` for leaves
    count: np.ndarray  # (N,) triangle count for leaves, 0 for inner nodes
    order: np.ndarray  # (T,) triangle ids in leaf order
    leaf_size: int

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def is_empty(self) -> bool:
        return self.n_nodes == 0

    def leaves(self) -> np.ndarray:
        return np.nonzero(self.left < 0)[0]

    def leaf_triangles(self, node: int) -> np.ndarray:
        return self.order[self.start[node] : self.start[node] + self.count[node]]


@dataclass(frozen=True)
class RayHit:
    t: float
    triangle: int
    point: tuple[float, float, float]


# -- construction -------------------------------------------------------------


@numba.njit(cache=True)
def _build_kernel(tri_lo, tri_hi, cent, leaf_size):
    n = tri_lo.shape[0]
    max_nodes = 2 * n
    lo = np.empty((max_nodes, 3))
    hi = np.empty((max_nodes, 3))
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    start = np.zeros(max_nodes, dtype=np.int64)
    count = np.zeros(max_nodes, dtype=np.int64)
    order = np.arange(n)

    st_node = np.empty(max_nodes, dtype=np.int64)
    st_a = np.empty(max_nodes, dtype=np.int64)
    st_b = np.empty(max_nodes, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_a[0] = 0
    st_b[0] = n
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        a = st_a[sp]
        b = st_b[sp]
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for k in range(3):
            lo[node, k] = np.inf
            hi[node, k] = -np.inf
        for i in range(a, b):
            t = order[i]
            for k in range(3):
                if tri_lo[t, k] < lo[node, k]:
                    lo[node, k] = tri_lo[t, k]
                if tri_hi[t, k] > hi[node, k]:
                    hi[node, k] = tri_hi[t, k]
                if cent[t, k] < clo[k]:
                    clo[k] = cent[t, k]
                if cent[t, k] > chi[k]:
                    chi[k] = cent[t, k]
        if b - a <= leaf_size:
            start[node] = a
            count[node] = b - a
            continue
        axis = 0
        ext = chi[0] - clo[0]
        for k in range(1, 3):
            if chi[k] - clo[k] > ext:
                ext = chi[k] - clo[k]
                axis = k
        seg = order[a:b].copy()
        keys = np.empty(b - a)
        for i in range(b - a):
            keys[i] = cent[seg[i], axis]
        perm = np.argsort(keys, kind="mergesort")
        for i in range(b - a):
            order[a + i] = seg[perm[i]]
        mid = (a + b) // 2
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        st_node[sp] = r_id
        st_a[sp] = mid
        st_b[sp] = b
        sp += 1
        st_node[sp] = l_id
        st_a[sp] = a
        st_b[sp] = mid
        sp += 1
    return lo[:n_nodes], hi[:n_nodes], left[:n_nodes], right[:n_nodes], start[:n_nodes], count[:n_nodes], order


def build_bvh(mesh: TriangleMesh, leaf_size: int = DEFAULT_LEAF_SIZE) -> Bvh:
    if leaf_size < 1:
        raise ValueError(f"leaf_size must be >= 1, got {leaf_size}")
    if len(mesh.triangles) == 0:
        z3 = np.zeros((0, 3))
        zi = np.zeros(0, dtype=np.int64)
        return Bvh(z3, z3, zi, zi, zi, zi, zi, leaf_size)
    c = mesh.corners()
    tri_lo = c.min(axis=1)
    tri_hi = c.max(axis=1)
    cent = c.mean(axis=1)
    lo, hi, left, right, start, count, order = _build_kernel(tri_lo, tri_hi, cent, leaf_size)
    pad = _BOX_PAD * (np.abs(lo) + np.abs(hi) + (hi - lo)) + 1e-300
    return Bvh(lo - pad, hi + pad, left, right, start, count, order, leaf_size)


# -- traversal ------------------------------------------------------------------


@numba.njit(cache=True, inline="always")
def _watertight(ox, oy, oz, kx, ky, kz, sx, sy, sz, a, b, c, t_eps):
    """Watertight ray/triangle test (shear + scale into ray space).

    Returns (t, u, v, w) with barycentrics for (a, b, c), t = -1 on miss.
    Both faces are hit.
    """
    ax = a[0] - ox
    ay = a[1] - oy
    az = a[2] - oz
    bx = b[0] - ox
    by = b[1] - oy
    bz = b[2] - oz
    cx = c[0] - ox
    cy = c[1] - oy
    cz = c[2] - oz
    A = (ax, ay, az)
    B = (bx, by, bz)
    C = (cx, cy, cz)
    Ax = A[kx] - sx * A[kz]
    Ay = A[ky] - sy * A[kz]
    Bx = B[kx] - sx * B[kz]
    By = B[ky] - sy * B[kz]
    Cx = C[kx] - sx * C[kz]
    Cy = C[ky] - sy * C[kz]
    U = Cx * By - Cy * Bx
    V = Ax * Cy - Ay * Cx
    W = Bx * Ay - By * Ax
    if (U < 0.0 or V < 0.0 or W < 0.0) and (U > 0.0 or V > 0.0 or W > 0.0):
        return -1.0, 0.0, 0.0, 0.0
    det = U + V + W
    if det == 0.0:
        return -1.0, 0.0, 0.0, 0.0
    T = U * (sz * A[kz]) + V * (sz * B[kz]) + W * (sz * C[kz])
    t = T / det
    if not t > t_eps:
        return -1.0, 0.0, 0.0, 0.0
    return t, U / det, V / det, W / det


@numba.njit(cache=True, inline="always")
def _slab(ox, oy, oz, dx, dy, dz, lo, hi, node):
    tmin = 0.0
    tmax = np.inf
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    for k in range(3):
        if d[k] == 0.0:
            if o[k] < lo[node, k] or o[k] > hi[node, k]:
                return np.inf
            continue
        inv = 1.0 / d[k]
        t0 = (lo[node, k] - o[k]) * inv
        t1 = (hi[node, k] - o[k]) * inv
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1
    if tmin > tmax * (1.0 + 4e-16):
        return np.inf
    return tmin


@numba.njit(cache=True)
def _cast_one(o, d, V, F, lo, hi, left, right, start, count, order, t_eps, tie_eps):
    ox, oy, oz = o[0], o[1], o[2]
    dx, dy, dz = d[0], d[1], d[2]
    adx, ady, adz = abs(dx), abs(dy), abs(dz)
    kz = 0
    if ady > adx and ady >= adz:
        kz = 1
    elif adz > adx and adz > ady:
        kz = 2
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    dd = (dx, dy, dz)
    if dd[kz] < 0.0:
        kx, ky = ky, kx
    sx = dd[kx] / dd[kz]
    sy = dd[ky] / dd[kz]
    sz = 1.0 / dd[kz]

    best_t = np.inf
    best = -1
    limit = np.inf
    stack = np.empty(_STACK, dtype=np.int64)
    # pass 0 finds the nearest t, pass 1 the lowest id among ties with it
    for phase in range(2):
        if phase == 1:
            if best < 0:
                break
            limit = best_t + tie_eps
        sp = 0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            bound = best_t + tie_eps if phase == 0 else limit
            tn = _slab(ox, oy, oz, dx, dy, dz, lo, hi, node)
            if tn == np.inf or tn > bound:
                continue
            if left[node] < 0:
                for i in range(start[node], start[node] + count[node]):
                    tri = order[i]
                    t, _, _, _ = _watertight(
                        ox, oy, oz, kx, ky, kz, sx, sy, sz, V[F[tri, 0]], V[F[tri, 1]], V[F[tri, 2]], t_eps
                    )
                    if t < 0.0:
                        continue
                    if phase == 0:
                        if t < best_t or (t == best_t and tri < best):
                            best_t = t
                            best = tri
                    elif t <= limit and tri < best:
                        best = tri
            else:
                stack[sp] = right[node]
                stack[sp + 1] = left[node]
                sp += 2
    if best < 0:
        return -1, np.nan
    t, _, _, _ = _watertight(
        ox, oy, oz, kx, ky, kz, sx, sy, sz, V[F[best, 0]], V[F[best, 1]], V[F[best, 2]], t_eps
    )
    return best, t


@numba.njit(cache=True, nogil=True)
def _cast_batch(O, D, V, F, lo, hi, left, right, start, count, order, t_eps, tie_eps, out_tri, out_t):
    for r in range(D.shape[0]):
        tri, t = _cast_one(O[r], D[r], V, F, lo, hi, left, right, start, count, order, t_eps, tie_eps)
        out_tri[r] = tri
        out_t[r] = t


def cast_rays(
    bvh: Bvh,
    mesh: TriangleMesh,
    directions: np.ndarray,
    origins: np.ndarray | None = None,
    workers: int = 1,
    t_epsilon: float = T_EPSILON,
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit per ray. Returns (triangle ids, t); misses give -1 / nan."""
    D = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    n = len(D)
    out_tri = np.full(n, -1, dtype=np.int64)
    out_t = np.full(n, np.nan)
    if n == 0 or bvh.is_empty():
        return out_tri, out_t
    if origins is None:
        O = np.zeros_like(D)
    else:
        O = np.ascontiguousarray(np.broadcast_to(origins, D.shape), dtype=np.float64)
    V = np.ascontiguousarray(mesh.vertices, dtype=np.float64)
    F = np.ascontiguousarray(mesh.triangles, dtype=np.int64)
    args = (V, F, bvh.lo, bvh.hi, bvh.left, bvh.right, bvh.start, bvh.count, bvh.order, t_epsilon, TIE_EPSILON)
    if workers <= 1 or n < 2 * workers:
        _cast_batch(O, D, *args, out_tri, out_t)
        return out_tri, out_t
    bounds = np.linspace(0, n, workers + 1).astype(int)

    def run(i):
        a, b = bounds[i], bounds[i + 1]
        _cast_batch(O[a:b], D[a:b], *args, out_tri[a:b], out_t[a:b])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(run, range(workers)))
    return out_tri, out_t


def cast(bvh: Bvh, mesh: TriangleMesh, direction, origin=(0.0, 0.0, 0.0)) -> RayHit | None:
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError(f"ray direction must be unit length, |d| = {np.linalg.norm(d)!r}")
    o = np.asarray(origin, dtype=np.float64)
    tri, t = cast_rays(bvh, mesh, d[None, :], o[None, :])
    if tri[0] < 0:
        return None
    p = o + t[0] * d
    return RayHit(float(t[0]), int(tri[0]), (float(p[0]), float(p[1]), float(p[2])))
