"""Measure-preserving velocity fields built from stream functions.

Field ``i`` on triangle ``t`` is ``rot90(grad u_i) / p_t`` with
``rot90(a, b) = (-b, a)`` and ``p_t`` the floored density at the centroid.
The stream functions are Dirichlet eigenfunctions, plus one harmonic
function per hole of the free space that equals 1 on that hole's boundary
and 0 on every other boundary loop.  Each ``u_i`` is constant along every
boundary loop, so the fields are tangent to the boundary and
``div(p v_i) = 0`` holds weakly (exactly so for uniform ``p``).

Without the harmonic functions the net flux through any passage between two
boundary loops is zero, so no field carries mass around a hole (for example
through one corridor and back through the other).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from scipy.stats import qmc

from . import _kernels
from .errors import NumericalError, ValidationError
from .fem import FemMatrices, SpectralBasis, basis_gradients
from .mesh.density import InfoDistribution
from .mesh.geometry import TriMesh

DEFAULT_N_FIELDS = 8

# Degree-5 rule on the reference triangle: (barycentric, weight), weights sum to 1.
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_QUAD_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_QUAD_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


@dataclass(frozen=True, eq=False)
class FlowBasis:
    """Per-triangle velocities ``velocity[i, t] = (vx, vy)`` of each basis field."""

    velocity: np.ndarray
    stream_basis: SpectralBasis
    density: InfoDistribution
    mesh_hash: str
    n_circulation: int = 0

    @property
    def n_fields(self) -> int:
        return self.velocity.shape[0]

    def combine(self, coefficients) -> np.ndarray:
        """Per-triangle velocity ``sum_i c_i v_i``; accepts a row or a stack of rows."""
        c = np.asarray(coefficients, dtype=float)
        if c.shape[-1] != self.n_fields:
            raise ValidationError(f"expected {self.n_fields} coefficients, got {c.shape[-1]}")
        return np.ascontiguousarray(np.tensordot(c, self.velocity, axes=([-1], [0])))


def boundary_loops(mesh: TriMesh) -> list:
    """Vertex index arrays of the boundary loops, the outer loop first."""
    edges = np.array(sorted(mesh.boundary_edges), dtype=np.int64).reshape(-1, 2)
    n = mesh.n_vertices
    g = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, label = connected_components(g, directed=False)
    on = np.flatnonzero(mesh.boundary_vertex_mask)
    # the lowest (x, y) vertex of the mesh lies on the outer loop
    outer = label[on[np.lexsort((mesh.vertices[on, 1], mesh.vertices[on, 0]))[0]]]
    loops = [on[label[on] == outer]]
    loops += [on[label[on] == c] for c in sorted(set(label[on].tolist()) - {outer})]
    return loops


def circulation_streams(mesh: TriMesh, fm: FemMatrices) -> np.ndarray:
    """Harmonic stream functions ``(n_vertices, holes)``, M-normalized.

    Column ``j`` is discrete-harmonic inside, 1 on the boundary of hole ``j``
    and 0 on every other boundary vertex.  Simply connected maps give zero
    columns.
    """
    if fm.mesh_hash != mesh.content_hash:
        raise ValidationError("FEM matrices were assembled on a different mesh")
    loops = boundary_loops(mesh)
    inner = fm.interior_index
    out = np.zeros((mesh.n_vertices, len(loops) - 1))
    if len(loops) == 1:
        return out
    K = fm.K.tocsr()
    K_ii = K[inner][:, inner].tocsc()
    for j, hole in enumerate(loops[1:]):
        g = np.zeros(mesh.n_vertices)
        g[hole] = 1.0
        u = g.copy()
        u[inner] = spsolve(K_ii, -(K[inner] @ g))
        nrm = np.sqrt(u @ (fm.M @ u))
        if not (np.all(np.isfinite(u)) and nrm > 0):
            raise NumericalError("harmonic stream function solve failed")
        out[:, j] = u / nrm
    return out


def build_flow_basis(mesh: TriMesh, dirichlet_basis: SpectralBasis, p: InfoDistribution,
                     n_fields: int = DEFAULT_N_FIELDS, circulation=None) -> FlowBasis:
    """Fields from the first ``n_fields`` Dirichlet modes.

    ``circulation`` optionally holds extra stream functions (one column per
    field, see ``circulation_streams``); their fields follow the Dirichlet
    ones.
    """
    if dirichlet_basis.bc != "dirichlet":
        raise ValidationError("stream functions need a Dirichlet basis")
    if dirichlet_basis.mesh_hash != mesh.content_hash:
        raise ValidationError("basis was computed on a different mesh")
    if not 1 <= n_fields <= dirichlet_basis.count:
        raise ValidationError(f"n_fields must be in 1..{dirichlet_basis.count}, got {n_fields}")
    grad = basis_gradients(mesh, dirichlet_basis.truncated(n_fields))  # (m, n, 2)
    n_circ = 0
    if circulation is not None:
        extra = np.asarray(circulation, dtype=float)
        if extra.ndim != 2 or extra.shape[0] != mesh.n_vertices:
            raise ValidationError("circulation streams must have one row per vertex")
        n_circ = extra.shape[1]
        grad = np.concatenate(
            [grad, np.einsum("tik,tid->tkd", extra[mesh.triangles], mesh.hat_gradients)], axis=1)
    pbar = p.centroid_values(mesh)
    if not np.all(pbar > 0):
        raise NumericalError("density is not positive on every triangle after flooring")
    n = grad.shape[1]
    vel = np.empty((n, mesh.n_triangles, 2))
    vel[:, :, 0] = (-grad[:, :, 1] / pbar[:, None]).T
    vel[:, :, 1] = (grad[:, :, 0] / pbar[:, None]).T
    if not np.all(np.isfinite(vel)):
        raise NumericalError("non-finite field velocity")
    vel.setflags(write=False)
    return FlowBasis(vel, dirichlet_basis, p, mesh.content_hash, n_circ)


def evaluate_field(mesh: TriMesh, flow: FlowBasis, coefficients, point) -> np.ndarray:
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (flow.n_fields,):
        raise ValidationError(f"expected {flow.n_fields} coefficients, got shape {c.shape}")
    t = int(mesh.locate_many(np.asarray(point, dtype=float)[None])[0])
    if t < 0:
        raise ValidationError(f"point {list(point)} lies outside the mesh")
    return c @ flow.velocity[:, t, :]


def triangle_density_integrals(mesh: TriMesh, p: InfoDistribution) -> np.ndarray:
    """``int_T p dx`` per triangle (floored analytic density when available)."""
    if p.spec is None or p.scale is None:
        return mesh.areas * p.density[mesh.triangles].mean(axis=1)
    pts = np.einsum("qi,tid->tqd", _QUAD_BARY, mesh.vertices[mesh.triangles])
    vals = np.maximum(p.scale * p.spec.pdf(pts), p.floor)
    return mesh.areas * (vals @ _QUAD_W)


def weak_divergence_residual(mesh: TriMesh, p: InfoDistribution, flow: FlowBasis,
                             field_index: int) -> float:
    """``max_w |int p v . grad(psi_w) dx|`` over interior hat functions ``psi_w``."""
    if not 0 <= field_index < flow.n_fields:
        raise ValidationError(f"field index {field_index} out of range")
    ip = triangle_density_integrals(mesh, p)
    v = flow.velocity[field_index]
    contrib = ip[:, None] * np.einsum("td,tid->ti", v, mesh.hat_gradients)
    r = np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.n_vertices)
    interior = ~mesh.boundary_vertex_mask
    return float(np.max(np.abs(r[interior]))) if interior.any() else 0.0


# ------------------------------------------------------------ advection
def advect(mesh: TriMesh, W: np.ndarray, points, duration: float, dt: float,
           vmax: float = np.inf, tris=None, want_jacobian=False):
    """Trace ``points`` through the per-triangle field ``W`` (m, 2).

    Returns ``(positions, triangles, jacobians)``; jacobians are the flow-map
    derivatives when requested.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    if tris is None:
        tris = mesh.locate_many(pts)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    if np.any(tris < 0):
        raise ValidationError("advected points must start inside the mesh")
    nsteps = int(round(duration / dt))
    if nsteps < 0 or abs(nsteps * dt - duration) > 1e-9 * max(1.0, abs(duration)):
        raise ValidationError("duration must be a nonnegative multiple of dt")
    out, out_t, jac, worst = _kernels.advect_points(
        mesh.bary_coefficients, mesh.adjacency, mesh.triangles, *mesh._fan,
        np.ascontiguousarray(W, dtype=float),
        float(vmax), pts, tris, float(dt), nsteps, bool(want_jacobian))
    if worst != _kernels.TRACE_OK:
        raise NumericalError(f"tracer failed (status {worst})")
    return out, out_t, (jac if want_jacobian else None)


@dataclass(frozen=True)
class MassReport:
    """Outcome of a push-forward mass check on a disc of radius ``radius``.

    ``mass_after`` integrates ``p`` over the image set directly (membership by
    backward advection); ``mass_after_jacobian`` uses the change of variables
    with the flow-map Jacobian determinant.  ``rms_return`` is the RMS
    distance after flowing forward then backward.
    """

    mass_before: float
    mass_after: float
    mass_after_jacobian: float
    rms_return: float
    n_samples: int

    @property
    def relative_change(self) -> float:
        return abs(self.mass_after - self.mass_before) / self.mass_before


def _sobol(n, seed):
    m = max(1, int(np.ceil(np.log2(n))))
    return qmc.Sobol(2, scramble=True, seed=seed).random_base2(m)[:n]


def _disc_samples(center, radius, n, seed):
    u = _sobol(n, seed)
    r = radius * np.sqrt(u[:, 0])
    a = 2 * np.pi * u[:, 1]
    return np.column_stack([center[0] + r * np.cos(a), center[1] + r * np.sin(a)])


def measure_preservation_test(mesh: TriMesh, p: InfoDistribution, flow: FlowBasis,
                              coefficients, center, radius: float, duration: float = 1.0,
                              dt: float = 1e-3, n_samples: int = 10_000, seed: int = 0,
                              vmax: float = np.inf) -> MassReport:
    """Advect a disc under a fixed field combination and compare ``p``-masses."""
    if dt > 1e-3 * duration and duration > 0:
        raise ValidationError("dt must be at most 1e-3 times the duration")
    center = np.asarray(center, dtype=float)
    W = flow.combine(coefficients)
    x0 = _disc_samples(center, radius, n_samples, seed)
    t0 = mesh.locate_many(x0)
    if np.any(t0 < 0):
        raise ValidationError("the disc must lie inside the free space")
    disc_area = np.pi * radius ** 2
    p0 = p.evaluate(mesh, t0, x0)
    mass_before = disc_area * float(p0.mean())

    x1, t1, jac = advect(mesh, W, x0, duration, dt, vmax, t0, want_jacobian=True)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    mass_jac = disc_area * float((p.evaluate(mesh, t1, x1) * det).mean())

    back, _, _ = advect(mesh, -W, x1, duration, dt, vmax, t1)
    rms = float(np.sqrt(((back - x0) ** 2).sum(1).mean()))

    if not np.any(W):
        # identity flow: the image is the disc itself
        return MassReport(mass_before, mass_before, mass_jac, rms, n_samples)
    # integrate p over the image: sample its bounding box, keep points whose
    # backward image lands in the disc
    lo = x1.min(axis=0)
    hi = x1.max(axis=0)
    pad = 0.05 * (hi - lo) + 1e-9
    lo, hi = lo - pad, hi + pad
    box = _sobol(4 * n_samples, seed + 1)
    y = lo + box * (hi - lo)
    ty = mesh.locate_many(y)
    inside = ty >= 0
    y, ty = y[inside], ty[inside]
    yb, _, _ = advect(mesh, -W, y, duration, dt, vmax, ty)
    hit = ((yb - center) ** 2).sum(1) <= radius ** 2
    vals = np.zeros(len(box))
    vals[np.flatnonzero(inside)[hit]] = p.evaluate(mesh, ty[hit], y[hit])
    mass_after = float(np.prod(hi - lo)) * float(vals.mean())
    return MassReport(mass_before, mass_after, mass_jac, rms, n_samples)


# ------------------------------------------------------------ export
def field_csv(mesh: TriMesh, flow: FlowBasis, coefficients) -> str:
    W = flow.combine(coefficients)
    c = mesh.centroids
    lines = ["triangle,centroid_x,centroid_y,vx,vy"]
    for t in range(mesh.n_triangles):
        lines.append(f"{t},{c[t, 0]:.11e},{c[t, 1]:.11e},{W[t, 0]:.11e},{W[t, 1]:.11e}")
    return "\n".join(lines) + "\n"


def export_field_csv(mesh: TriMesh, flow: FlowBasis, coefficients, path) -> None:
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(field_csv(mesh, flow, coefficients))
    os.replace(tmp, path)
