"""Plain-text mesh and distribution files.

Mesh::

    ergomesh 1
    <n_vertices>
    <n_triangles>
    x y            (n_vertices lines, 17 significant digits)
    i j k          (n_triangles lines, 0-based, counter-clockwise)

Distribution sidecar::

    ergodist 1
    <n_vertices>
    value          (one per line)
"""

from __future__ import annotations

import math
import os

import numpy as np

from ..errors import MeshParseError, ValidationError
from .density import InfoDistribution
from .geometry import TriMesh

MESH_HEADER = "ergomesh 1"
DIST_HEADER = "ergodist 1"


def save_mesh(mesh: TriMesh, path) -> None:
    _atomic_write(path, mesh.to_text())


def _lines(text):
    # (line number, stripped content), skipping blank lines
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s:
            yield no, s


def _count(it, what):
    try:
        no, s = next(it)
    except StopIteration:
        raise MeshParseError(f"unexpected end of file, expected {what}") from None
    try:
        n = int(s)
    except ValueError:
        raise MeshParseError(f"expected integer {what}, got {s!r}", line=no) from None
    if n < 0:
        raise MeshParseError(f"{what} must be nonnegative", line=no)
    return n


def _header(it, expected):
    try:
        no, s = next(it)
    except StopIteration:
        raise MeshParseError("empty file") from None
    if s != expected:
        raise MeshParseError(f"expected header {expected!r}, got {s!r}", line=no)


def parse_mesh(text: str) -> TriMesh:
    it = _lines(text)
    _header(it, MESH_HEADER)
    nv = _count(it, "vertex count")
    nt = _count(it, "triangle count")
    verts = np.empty((nv, 2))
    tris = np.empty((nt, 3), dtype=np.int64)
    for i in range(nv):
        no, s = next(it, (None, None))
        if no is None:
            raise MeshParseError(f"unexpected end of file in vertex {i}")
        parts = s.split()
        try:
            if len(parts) != 2:
                raise ValueError
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise MeshParseError(f"expected 'x y', got {s!r}", line=no) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise MeshParseError("non-finite vertex coordinate", line=no)
        verts[i] = x, y
    for i in range(nt):
        no, s = next(it, (None, None))
        if no is None:
            raise MeshParseError(f"unexpected end of file in triangle {i}")
        parts = s.split()
        try:
            if len(parts) != 3:
                raise ValueError
            idx = [int(p) for p in parts]
        except ValueError:
            raise MeshParseError(f"expected three vertex indices, got {s!r}", line=no) from None
        for k in idx:
            if not 0 <= k < nv:
                raise MeshParseError(f"vertex index {k} out of range 0..{nv - 1}", line=no)
        tris[i] = idx
    extra = next(it, None)
    if extra is not None:
        raise MeshParseError("trailing content after last triangle", line=extra[0])
    return TriMesh(verts, tris)


def load_mesh(path) -> TriMesh:
    with open(path, encoding="utf-8") as fh:
        return parse_mesh(fh.read())


def distribution_text(dist: InfoDistribution) -> str:
    lines = [DIST_HEADER, str(len(dist.density))]
    lines += [f"{v:.17g}" for v in dist.density.tolist()]
    return "\n".join(lines) + "\n"


def save_distribution(dist: InfoDistribution, path) -> None:
    _atomic_write(path, distribution_text(dist))


def parse_distribution(text: str, mesh: TriMesh = None) -> InfoDistribution:
    it = _lines(text)
    _header(it, DIST_HEADER)
    n = _count(it, "vertex count")
    if mesh is not None and n != mesh.n_vertices:
        raise ValidationError(f"distribution has {n} values but mesh has {mesh.n_vertices} vertices")
    vals = np.empty(n)
    for i in range(n):
        no, s = next(it, (None, None))
        if no is None:
            raise MeshParseError(f"unexpected end of file at value {i}")
        try:
            vals[i] = float(s)
        except ValueError:
            raise MeshParseError(f"expected a number, got {s!r}", line=no) from None
    extra = next(it, None)
    if extra is not None:
        raise MeshParseError("trailing content after last value", line=extra[0])
    return InfoDistribution(vals)


def load_distribution(path, mesh: TriMesh = None) -> InfoDistribution:
    with open(path, encoding="utf-8") as fh:
        return parse_distribution(fh.read(), mesh)


def _atomic_write(path, text):
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
