"""Generators for the test environments.

Square, maze and C-shaped maps are axis-aligned and meshed from a pixel mask
(two triangles per free pixel).  The rooms map has curved walls and is meshed
by Delaunay triangulation of resampled boundary rings plus a hexagonal
interior lattice; triangles are kept when their centroid is in free space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from scipy.spatial import Delaunay
from shapely.geometry import Polygon, box
from shapely.ops import unary_union

from ..errors import ValidationError
from .geometry import TriMesh

# Serpentine lanes with a baffle in the first and last lane.  Each entry is
# ``"h x0 x1 y"`` or ``"v y0 y1 x"`` in maze-cell units.
DEFAULT_MAZE_WALLS = (
    "h 0 3 1",
    "h 1 4 2",
    "h 0 3 3",
    "v 0 0.5 2",
    "v 3.5 4 2",
)

MAP_KINDS = ("square", "maze", "rooms", "cshape")


@dataclass(frozen=True)
class MapSpec:
    """Parameters of a generated map (all lengths in map units).

    ``h`` is the target edge length.  Square/maze/cshape use ``side``; the maze
    adds ``maze_cells``, ``wall_thickness`` and ``maze_walls``; rooms uses the
    ``room_radius``/``corridor_*`` fields; cshape cuts the slot
    ``[cshape_slot_x, side] x [cshape_slot_y0, cshape_slot_y1]``.
    """

    kind: str
    h: float
    side: float = 1.0
    maze_cells: tuple = (4, 4)
    wall_thickness: float = 0.05
    maze_walls: tuple = DEFAULT_MAZE_WALLS
    room_radius: float = 0.5
    corridor_length: float = 1.0
    corridor_width: float = 0.12
    corridor_offset: float = 0.25
    cshape_slot_x: float = 0.3
    cshape_slot_y0: float = 0.4
    cshape_slot_y1: float = 0.6

    def validate(self):
        if self.kind not in MAP_KINDS:
            raise ValidationError(f"unknown map kind {self.kind!r}; expected one of {MAP_KINDS}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValidationError(f"resolution h must be positive, got {self.h}")
        if self.side <= 0:
            raise ValidationError("side must be positive")
        if self.kind == "rooms":
            if self.corridor_width <= 2 * self.h:
                raise ValidationError(
                    f"corridor width {self.corridor_width} must exceed 2h = {2 * self.h} "
                    "so the corridor has at least two element layers"
                )
            if self.room_radius <= 0 or self.corridor_length <= 0:
                raise ValidationError("room radius and corridor length must be positive")
            if self.corridor_offset + self.corridor_width / 2 >= self.room_radius:
                raise ValidationError("corridors must attach inside the rooms")
            if self.corridor_offset - self.corridor_width / 2 < 0:
                raise ValidationError("the two corridors overlap")
        if self.kind == "maze":
            nx, ny = self.maze_cells
            if nx < 1 or ny < 1:
                raise ValidationError("maze needs at least one cell per direction")
        return self


def generate_map(spec: MapSpec) -> TriMesh:
    """Mesh the free space described by ``spec`` (deterministic)."""
    spec.validate()
    if spec.kind == "square":
        n = _cells(spec.side, spec.h)
        return mask_mesh(np.ones((n, n), dtype=bool), spec.side / n)
    if spec.kind == "maze":
        return _maze(spec)
    if spec.kind == "cshape":
        return _cshape(spec)
    return _rooms(spec)


def _cells(length, h):
    return max(1, int(math.ceil(length / h - 1e-9)))


def _as_int(value, what):
    k = round(value)
    if abs(value - k) > 1e-6:
        raise ValidationError(f"{what} must be an integer multiple of the resolution h")
    return int(k)


# ---------------------------------------------------------------- mask meshes
def mask_mesh(free: np.ndarray, h: float, origin=(0.0, 0.0)) -> TriMesh:
    """Two triangles per free pixel of the boolean grid ``free[ix, iy]``.

    The diagonal of each pixel is chosen to avoid triangles whose three
    vertices all lie on the boundary (such triangles carry zero stream-function
    gradient); ties use the diagonal pointing at the grid centre.
    """
    free = np.asarray(free, dtype=bool)
    nx, ny = free.shape
    pad = np.zeros((nx + 2, ny + 2), dtype=bool)
    pad[1:-1, 1:-1] = free
    # the four pixels around vertex (i, j): pad[i..i+1, j..j+1]
    q00, q10 = pad[:-1, :-1], pad[1:, :-1]
    q01, q11 = pad[:-1, 1:], pad[1:, 1:]
    nfree = q00.astype(int) + q10 + q01 + q11
    bowtie = (nfree == 2) & ((q00 & q11) | (q10 & q01))
    if bowtie.any():
        i, j = np.argwhere(bowtie)[0]
        raise ValidationError(f"free pixels touch only diagonally at grid vertex ({i}, {j})")
    used = nfree > 0
    boundary = used & (nfree < 4)
    vid = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    # row-major in y then x
    jj, ii = np.nonzero(used.T)
    vid[ii, jj] = np.arange(len(ii))
    verts = np.column_stack([origin[0] + ii * h, origin[1] + jj * h])

    tris = []
    cx, cy = nx / 2.0, ny / 2.0
    for j in range(ny):
        for i in range(nx):
            if not free[i, j]:
                continue
            a, b = vid[i, j], vid[i + 1, j]
            c, d = vid[i + 1, j + 1], vid[i, j + 1]
            ba, bb = boundary[i, j], boundary[i + 1, j]
            bc, bd = boundary[i + 1, j + 1], boundary[i, j + 1]
            # diagonal a-c: (a,b,c), (a,c,d); diagonal b-d: (a,b,d), (b,c,d)
            dead_ac = int(ba and bb and bc) + int(ba and bc and bd)
            dead_bd = int(ba and bb and bd) + int(bb and bc and bd)
            if dead_ac != dead_bd:
                use_ac = dead_ac < dead_bd
            else:
                use_ac = (i + 0.5 - cx) * (j + 0.5 - cy) >= 0
            if use_ac:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return TriMesh(verts, np.array(tris, dtype=np.int64))


def _maze(spec):
    ncx, ncy = spec.maze_cells
    n = _cells(spec.side, spec.h)
    h = spec.side / n
    pitch_x = spec.side / ncx / h
    pitch_y = spec.side / ncy / h
    px = _as_int(pitch_x, "maze cell width")
    py = _as_int(pitch_y, "maze cell height")
    thick = _as_int(spec.wall_thickness / h, "wall thickness")
    if thick < 1:
        raise ValidationError("wall thickness must be at least one element")
    if (min(px, py) - thick) * h <= 2 * h:
        raise ValidationError(
            f"maze corridor width {(min(px, py) - thick) * h:g} must exceed 2h = {2 * h:g}"
        )
    free = np.ones((n, n), dtype=bool)
    lo = thick // 2
    for wall in spec.maze_walls:
        parts = wall.split()
        if len(parts) != 4 or parts[0] not in ("h", "v"):
            raise ValidationError(f"bad maze wall {wall!r}; expected 'h x0 x1 y' or 'v y0 y1 x'")
        a, b, c = (float(s) for s in parts[1:])
        if parts[0] == "h":
            x0, x1 = round(a * px) - lo, round(b * px) - lo + thick
            y0 = round(c * py) - lo
            free[max(x0, 0):max(x1, 0), max(y0, 0):max(y0 + thick, 0)] = False
        else:
            y0, y1 = round(a * py) - lo, round(b * py) - lo + thick
            x0 = round(c * px) - lo
            free[max(x0, 0):max(x0 + thick, 0), max(y0, 0):max(y1, 0)] = False
    _check_mask_connected(free)
    return mask_mesh(free, h)


def _cshape(spec):
    n = _cells(spec.side, spec.h)
    h = spec.side / n
    sx = _as_int(spec.cshape_slot_x / h, "slot x")
    sy0 = _as_int(spec.cshape_slot_y0 / h, "slot y0")
    sy1 = _as_int(spec.cshape_slot_y1 / h, "slot y1")
    if not (0 < sx < n and 2 < sy0 < sy1 < n - 2):
        raise ValidationError("C-shape slot must leave two arms and a spine")
    free = np.ones((n, n), dtype=bool)
    free[sx:, sy0:sy1] = False
    return mask_mesh(free, h)


def _check_mask_connected(free):
    from scipy.ndimage import label

    _, ncomp = label(free)
    if ncomp != 1:
        raise ValidationError(
            f"free space has {ncomp} connected components; a single component is required"
        )


# ---------------------------------------------------------------- rooms
def rooms_polygon(spec: MapSpec) -> Polygon:
    R, L = spec.room_radius, spec.corridor_length
    w, d = spec.corridor_width, spec.corridor_offset
    cx = R + L / 2.0
    nseg = max(256, int(math.ceil(2 * math.pi * R / (spec.h / 8))))
    ang = 2 * math.pi * np.arange(nseg) / nseg
    circ = [Polygon(np.column_stack([s * cx + R * np.cos(ang), R * np.sin(ang)]))
            for s in (-1.0, 1.0)]
    corr = [box(-cx, y - w / 2, cx, y + w / 2) for y in (d, -d)]
    geom = unary_union(circ + corr)
    if geom.geom_type != "Polygon":
        raise ValidationError("rooms free space is not a single connected region")
    return shapely.set_precision(geom, 1e-12)


def _resample_ring(coords, h, corner_deg=20.0):
    pts = np.asarray(coords)[:-1]
    n = len(pts)
    prev = pts - np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0) - pts
    cosang = (prev * nxt).sum(1) / (np.linalg.norm(prev, axis=1) * np.linalg.norm(nxt, axis=1))
    corners = np.flatnonzero(cosang < math.cos(math.radians(corner_deg)))
    if len(corners) == 0:
        corners = np.array([0])
    out = []
    for k, c0 in enumerate(corners):
        c1 = corners[(k + 1) % len(corners)]
        idx = np.arange(c0, c1 + (n if c1 <= c0 else 0) + 1) % n
        chain = pts[idx]
        seg = np.linalg.norm(np.diff(chain, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        m = max(1, int(math.ceil(cum[-1] / h - 1e-9)))
        s = np.linspace(0.0, cum[-1], m + 1)[:-1]
        out.append(np.column_stack([np.interp(s, cum, chain[:, 0]), np.interp(s, cum, chain[:, 1])]))
    return np.concatenate(out)


def polygon_mesh(poly: Polygon, h: float) -> TriMesh:
    """Triangulate a polygon (with holes) at target edge length ``h``."""
    rings = [_resample_ring(poly.exterior.coords, h)]
    rings += [_resample_ring(r.coords, h) for r in poly.interiors]
    bpts = np.concatenate(rings)
    segs = set()
    off = 0
    for r in rings:
        k = len(r)
        for i in range(k):
            a, b = off + i, off + (i + 1) % k
            segs.add((min(a, b), max(a, b)))
        off += k

    x0, y0, x1, y1 = poly.bounds
    dy = h * math.sqrt(3) / 2
    rows = np.arange(y0, y1 + dy, dy)
    lat = []
    for j, y in enumerate(rows):
        xs = np.arange(x0 + (h / 2 if j % 2 else 0.0), x1 + h, h)
        lat.append(np.column_stack([xs, np.full(len(xs), y)]))
    lat = np.concatenate(lat)
    keep = shapely.contains_xy(poly, lat[:, 0], lat[:, 1])
    lat = lat[keep]
    dist = shapely.distance(poly.boundary, shapely.points(lat))
    lat = lat[dist >= 0.55 * h]

    pts = np.concatenate([bpts, lat])
    tri = Delaunay(pts, qhull_options="Qbb Qc Qz Q12").simplices.astype(np.int64)
    p = pts[tri]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    area = np.abs(area)
    cen = p.mean(axis=1)
    inside = shapely.contains_xy(poly, cen[:, 0], cen[:, 1]) & (area > 1e-10 * h * h)
    tri = tri[inside]

    used = np.unique(tri)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh = TriMesh(pts[used], remap[tri])
    got = {(int(used[a]), int(used[b])) for a, b in mesh.boundary_edges}
    got = {(min(a, b), max(a, b)) for a, b in got}
    if got != segs:
        raise ValidationError(
            f"mesher failed to recover the boundary ({len(got ^ segs)} mismatched edges); "
            "try a smaller h"
        )
    return mesh


def _rooms(spec):
    return polygon_mesh(rooms_polygon(spec), spec.h)


def room_centers(spec: MapSpec):
    cx = spec.room_radius + spec.corridor_length / 2.0
    return np.array([[-cx, 0.0], [cx, 0.0]])
