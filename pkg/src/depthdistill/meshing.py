"""Organised-grid triangulation of a depth map with discontinuity culling."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Intrinsics, unproject_grid
from .core import DepthMap
from .errors import DepthIOError, InvalidArgumentError


@dataclass(frozen=True)
class MeshingConfig:
    discontinuity_ratio: float = 0.05
    area_epsilon: float = 1e-12

    def __post_init__(self):
        if not self.discontinuity_ratio > 0:
            raise InvalidArgumentError(
                f"discontinuity_ratio must be > 0, got {self.discontinuity_ratio}"
            )
        if self.area_epsilon < 0:
            raise InvalidArgumentError(f"area_epsilon must be >= 0, got {self.area_epsilon}")


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64
    vertex_pixel: np.ndarray  # (V, 2) int64, (u, v)

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros((0, 2), dtype=np.int64))

    def __len__(self):
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """(T, 3, 3) triangle corner coordinates."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)


def _ratio_ok(za, zb, ratio):
    return np.abs(za - zb) <= ratio * np.minimum(za, zb)


def grid_mesh(depth: DepthMap, K: Intrinsics, cfg: MeshingConfig | None = None) -> TriangleMesh:
    """Triangulate the unprojected pixel grid.

    Every 2x2 block of valid pixels yields two triangles split along the
    diagonal with the smaller depth difference; a block with exactly three
    valid pixels yields the single triangle over them. Triangles with an
    edge whose relative depth jump exceeds ``discontinuity_ratio``, or
    with area below ``area_epsilon``, are dropped. Winding is made
    counter-clockwise as seen from the camera.
    """
    cfg = cfg or MeshingConfig()
    h, w = depth.shape
    if h < 2 or w < 2:
        raise InvalidArgumentError(f"meshing needs at least 2x2 pixels, got {w}x{h}")
    if depth.n_valid < 3:
        return TriangleMesh.empty()

    idx = np.arange(h * w).reshape(h, w)
    ok = depth.valid
    z = depth.values
    # quad corners: a=(u,v) b=(u+1,v) c=(u,v+1) d=(u+1,v+1)
    ia, ib, ic, id_ = idx[:-1, :-1], idx[:-1, 1:], idx[1:, :-1], idx[1:, 1:]
    va, vb, vc, vd = ok[:-1, :-1], ok[:-1, 1:], ok[1:, :-1], ok[1:, 1:]
    za, zb, zc, zd = z[:-1, :-1], z[:-1, 1:], z[1:, :-1], z[1:, 1:]

    full = va & vb & vc & vd
    main_diag = np.abs(za - zd) <= np.abs(zb - zc)

    tris = []
    # full quads, split a-d
    m = full & main_diag
    tris.append(np.stack([ia[m], ib[m], id_[m]], axis=1))
    tris.append(np.stack([ia[m], id_[m], ic[m]], axis=1))
    # full quads, split b-c
    m = full & ~main_diag
    tris.append(np.stack([ia[m], ib[m], ic[m]], axis=1))
    tris.append(np.stack([ib[m], id_[m], ic[m]], axis=1))
    # three-valid quads: the triangle opposite the missing corner
    n_ok = va.astype(int) + vb + vc + vd
    three = n_ok == 3
    for missing, (p, q, r) in (
        (va, (ib, id_, ic)),
        (vb, (ia, id_, ic)),
        (vc, (ia, ib, id_)),
        (vd, (ia, ib, ic)),
    ):
        m = three & ~missing
        tris.append(np.stack([p[m], q[m], r[m]], axis=1))

    tri = np.concatenate(tris).astype(np.int64)
    if len(tri) == 0:
        return TriangleMesh.empty()

    zf = z.ravel()
    z0, z1, z2 = zf[tri[:, 0]], zf[tri[:, 1]], zf[tri[:, 2]]
    r = cfg.discontinuity_ratio
    keep = _ratio_ok(z0, z1, r) & _ratio_ok(z1, z2, r) & _ratio_ok(z2, z0, r)
    tri = tri[keep]

    pts = unproject_grid(depth, K).reshape(-1, 3)
    p0, p1, p2 = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    normal = np.cross(p1 - p0, p2 - p0)
    area = 0.5 * np.linalg.norm(normal, axis=1)
    keep = area >= max(cfg.area_epsilon, np.finfo(float).tiny)
    tri, normal, p0 = tri[keep], normal[keep], p0[keep]
    # counter-clockwise seen from the origin: normal faces the camera
    flip = np.einsum("ij,ij->i", normal, p0) > 0
    tri[flip] = tri[flip][:, [0, 2, 1]]

    used, inverse = np.unique(tri.ravel(), return_inverse=True)
    pixel = np.column_stack([used % w, used // w]).astype(np.int64)
    return TriangleMesh(pts[used], inverse.reshape(-1, 3).astype(np.int64), pixel)


def mesh_to_obj(mesh: TriangleMesh) -> str:
    """Wavefront OBJ text: vertex lines, then 1-based face lines."""
    lines = [f"# {len(mesh.vertices)} vertices, {len(mesh.triangles)} faces"]
    lines += ["v {!r} {!r} {!r}".format(*map(float, v)) for v in mesh.vertices]
    lines += ["f {} {} {}".format(*(int(i) + 1 for i in t)) for t in mesh.triangles]
    return "\n".join(lines) + "\n"


def export_mesh(mesh: TriangleMesh, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(mesh_to_obj(mesh))
        os.replace(tmp, path)
    except OSError as exc:
        raise DepthIOError(f"cannot write mesh to {path}: {exc}") from exc
