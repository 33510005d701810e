"""Triangulated free-space domain and point location."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .. import _kernels
from ..errors import ValidationError

AREA_TOL = 1e-14


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangle mesh of the free space.

    Parameters
    ----------
    vertices : (n, 2) float array
    triangles : (m, 3) int array, counter-clockwise

    Derived tables (``adjacency``, ``boundary_edges``, barycentric
    coefficients, ...) are computed once at construction.  Construction
    validates every invariant and raises :class:`ValidationError` otherwise.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    adjacency: np.ndarray = field(init=False, repr=False)
    boundary_edges: frozenset = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) == 0:
            raise ValidationError("vertices must be a non-empty (n, 2) array")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise ValidationError("triangles must be a non-empty (m, 3) array")
        if not np.all(np.isfinite(v)):
            raise ValidationError("vertex coordinates must be finite")
        if not np.issubdtype(t.dtype, np.integer):
            if not np.all(t == np.round(t)):
                raise ValidationError("triangle indices must be integers")
        t = t.astype(np.int64)
        if t.min() < 0 or t.max() >= len(v):
            raise ValidationError(f"triangle references vertex outside 0..{len(v) - 1}")
        used = np.zeros(len(v), dtype=bool)
        used[t.ravel()] = True
        if not used.all():
            raise ValidationError(f"vertex {int(np.argmin(used))} is not used by any triangle")
        area = _signed_areas(v, t)
        bad = np.flatnonzero(area <= AREA_TOL * max(1.0, float(np.ptp(v)) ** 2))
        if len(bad):
            raise ValidationError(
                f"triangle {int(bad[0])} has non-positive signed area {area[bad[0]]:.3e}"
            )
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "triangles", _readonly(t))
        adj, bnd = _build_adjacency(t)
        object.__setattr__(self, "adjacency", _readonly(adj))
        object.__setattr__(self, "boundary_edges", frozenset(bnd))
        ncomp = self._triangle_components()
        if ncomp != 1:
            raise ValidationError(
                f"triangle adjacency graph has {ncomp} connected components, expected 1"
            )

    # ------------------------------------------------------------------ basic
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        return _readonly(_signed_areas(self.vertices, self.triangles))

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def centroids(self) -> np.ndarray:
        return _readonly(self.vertices[self.triangles].mean(axis=1))

    @cached_property
    def bbox(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        for i, j in self.boundary_edges:
            mask[i] = mask[j] = True
        return _readonly(mask)

    @cached_property
    def bary_coefficients(self) -> np.ndarray:
        """``(m, 3, 3)`` table so that ``lambda_i = c0 + c1 * x + c2 * y``."""
        p = self.vertices[self.triangles]  # (m, 3, 2)
        ones = np.ones((self.n_triangles, 3, 1))
        T = np.concatenate([ones, p], axis=2)  # rows [1, x_i, y_i]
        # lambda = T^{-T} [1, x, y]; coefficients of lambda_i are row i of inv(T)^T
        inv = np.linalg.inv(T)
        return _readonly(np.transpose(inv, (0, 2, 1)))

    @property
    def hat_gradients(self) -> np.ndarray:
        """``(m, 3, 2)`` gradients of the three P1 hat functions per triangle."""
        return self.bary_coefficients[:, :, 1:]

    @cached_property
    def _fan(self):
        order = np.argsort(self.triangles.ravel(), kind="stable")
        idx = (order // 3).astype(np.int64)
        counts = np.bincount(self.triangles.ravel(), minlength=self.n_vertices)
        ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return ptr, idx

    def vertex_triangles(self, v: int) -> np.ndarray:
        ptr, idx = self._fan
        return idx[ptr[v]:ptr[v + 1]]

    def _triangle_components(self) -> int:
        m = len(self.triangles)
        rows, cols = np.nonzero(self.adjacency >= 0)
        g = coo_matrix((np.ones(len(rows)), (rows, self.adjacency[rows, cols])), shape=(m, m))
        ncomp, _ = connected_components(g, directed=False)
        return int(ncomp)

    def boundary_edge_normals(self):
        """Return ``(triangle, local_vertex, outward_unit_normal)`` per boundary edge."""
        tt, ii = np.nonzero(self.adjacency < 0)
        g = self.hat_gradients[tt, ii]
        n = -g / np.linalg.norm(g, axis=1)[:, None]
        return tt, ii, n

    # --------------------------------------------------------------- identity
    def to_text(self) -> str:
        lines = ["ergomesh 1", str(self.n_vertices), str(self.n_triangles)]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices.tolist()]
        lines += [f"{a} {b} {c}" for a, b, c in self.triangles.tolist()]
        return "\n".join(lines) + "\n"

    @cached_property
    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, TriMesh):
            return NotImplemented
        return (
            self.vertices.shape == other.vertices.shape
            and self.triangles.shape == other.triangles.shape
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
        )

    def __hash__(self):
        return hash(self.content_hash)

    # -------------------------------------------------------------- locating
    def locate(self, point, hint: Optional[int] = None):
        """See :func:`locate_point`."""
        return locate_point(self, point, hint)

    def locate_many(self, points, hints=None) -> np.ndarray:
        """Containing triangle for each row of ``points`` (``-1`` if outside)."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 2))
        if hints is None:
            hints = np.full(len(pts), -1, dtype=np.int64)
        else:
            hints = np.ascontiguousarray(np.broadcast_to(np.asarray(hints, dtype=np.int64),
                                                         (len(pts),)))
        ptr, idx = self._fan
        return _kernels.locate_many(self.bary_coefficients, self.adjacency, self.triangles,
                                    ptr, idx, pts, hints, _kernels.BARY_TOL)

    def barycentric(self, tri, points) -> np.ndarray:
        """Barycentric coordinates of ``points`` w.r.t. triangles ``tri``."""
        c = self.bary_coefficients[np.asarray(tri)]
        p = np.asarray(points, dtype=np.float64)
        return c[..., 0] + c[..., 1] * p[..., None, 0] + c[..., 2] * p[..., None, 1]

    def nearest_point(self, point):
        """Closest point of the mesh (on a boundary edge if ``point`` is outside)."""
        p = np.asarray(point, dtype=np.float64)
        edges = np.array(sorted(self.boundary_edges))
        a = self.vertices[edges[:, 0]]
        b = self.vertices[edges[:, 1]]
        ab = b - a
        s = np.clip(((p - a) * ab).sum(1) / (ab * ab).sum(1), 0.0, 1.0)
        q = a + s[:, None] * ab
        k = int(np.argmin(((q - p) ** 2).sum(1)))
        return q[k], float(np.sqrt(((q[k] - p) ** 2).sum()))


def _signed_areas(v, t):
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def _build_adjacency(t):
    m = len(t)
    # local edge i is opposite vertex i
    a = np.stack([t[:, 1], t[:, 2], t[:, 0]], axis=1).ravel()
    b = np.stack([t[:, 2], t[:, 0], t[:, 1]], axis=1).ravel()
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    key = lo * (int(t.max()) + 1) + hi
    order = np.argsort(key, kind="stable")
    ks = key[order]
    uniq, start, counts = np.unique(ks, return_index=True, return_counts=True)
    if counts.max() > 2:
        e = order[start[np.argmax(counts)]]
        raise ValidationError(
            f"non-manifold edge ({lo[e]}, {hi[e]}) shared by {counts.max()} triangles"
        )
    adj = np.full(3 * m, -1, dtype=np.int64)
    pair = counts == 2
    e1 = order[start[pair]]
    e2 = order[start[pair] + 1]
    if np.any(a[e1] == a[e2]):
        k = int(np.flatnonzero(a[e1] == a[e2])[0])
        raise ValidationError(
            f"inconsistent orientation between triangles {e1[k] // 3} and {e2[k] // 3}"
        )
    adj[e1] = e2 // 3
    adj[e2] = e1 // 3
    single = order[start[counts == 1]]
    bnd = {(int(lo[e]), int(hi[e])) for e in single}
    return adj.reshape(m, 3), bnd


def locate_point(mesh: TriMesh, point, hint: Optional[int] = None):
    """Find the triangle containing ``point``.

    Returns ``(triangle_index, barycentric)`` or ``None`` when the point is
    outside the free space.  Points on shared edges or vertices resolve to the
    lowest-index containing triangle, so the walking search (started at
    ``hint``) and an exhaustive scan always agree.
    """
    x, y = (float(c) for c in point)
    ptr, idx = mesh._fan
    h = -1 if hint is None else int(hint)
    t = _kernels.locate_walk(mesh.bary_coefficients, mesh.adjacency, mesh.triangles,
                             ptr, idx, x, y, h, _kernels.BARY_TOL)
    if t < 0:
        return None
    b = mesh.barycentric(t, np.array([x, y]))
    b = np.clip(b, 0.0, None)
    return int(t), b / b.sum()


def locate_point_exhaustive(mesh: TriMesh, point):
    """Reference linear scan used to cross-check :func:`locate_point`."""
    x, y = (float(c) for c in point)
    t = _kernels.locate_exhaustive(mesh.bary_coefficients, x, y, _kernels.BARY_TOL)
    if t < 0:
        return None
    b = np.clip(mesh.barycentric(t, np.array([x, y])), 0.0, None)
    return int(t), b / b.sum()
