"""Spectral ergodic metrics on the mesh eigenbasis and on a box cosine basis."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import ValidationError
from .fem import FemMatrices, SpectralBasis, basis_gradients, evaluate_basis_many
from .mesh.density import InfoDistribution
from .mesh.geometry import TriMesh

DEFAULT_K_TRUNC = 200
RASTER_SIZE = 256


def sobolev_weights(eigenvalues) -> np.ndarray:
    lam = np.maximum(np.asarray(eigenvalues, dtype=float), 0.0)
    return (1.0 + np.sqrt(lam)) ** -2


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """Natural-boundary basis truncated to ``K_trunc`` modes, with weights."""

    basis: SpectralBasis
    K_trunc: int = DEFAULT_K_TRUNC

    def __post_init__(self):
        if self.basis.bc != "natural":
            raise ValidationError("the ergodic metric needs a natural-boundary basis")
        if not 1 <= self.K_trunc <= self.basis.count:
            raise ValidationError(f"K_trunc must be in 1..{self.basis.count}, got {self.K_trunc}")

    @cached_property
    def weights(self) -> np.ndarray:
        return sobolev_weights(self.basis.eigenvalues[:self.K_trunc])

    @cached_property
    def vectors(self) -> np.ndarray:
        return np.ascontiguousarray(self.basis.vectors[:, :self.K_trunc])


@dataclass(frozen=True)
class SpectralCoeffs:
    xi_hat: np.ndarray
    xi: np.ndarray


def _states(traj):
    s = getattr(traj, "states", traj)
    s = np.asarray(s, dtype=float)
    if s.ndim == 2:
        s = s[None]
    return s


def map_coefficients(p: InfoDistribution, basis: SpectralBasis, fm: FemMatrices,
                     K_trunc: int) -> np.ndarray:
    """``xi_hat[k] = p^T M phi_k``."""
    if K_trunc > basis.count:
        raise ValidationError(f"K_trunc {K_trunc} exceeds basis count {basis.count}")
    return basis.vectors[:, :K_trunc].T @ (fm.M @ p.density)


def trajectory_coefficients(traj, basis: SpectralBasis, mesh: TriMesh, K_trunc: int,
                            tris=None) -> np.ndarray:
    """Mean of ``phi_k`` over every state of every agent."""
    if K_trunc > basis.count:
        raise ValidationError(f"K_trunc {K_trunc} exceeds basis count {basis.count}")
    pts = _states(traj).reshape(-1, 2)
    vals = evaluate_basis_many(mesh, basis.truncated(K_trunc), pts, tris)
    return vals.mean(axis=0)


def ergodicity(coeffs: SpectralCoeffs, spec: MetricSpec) -> float:
    xi, xh = np.asarray(coeffs.xi), np.asarray(coeffs.xi_hat)
    if xi.shape != xh.shape or len(xi) != spec.K_trunc:
        raise ValidationError("coefficient lengths disagree with K_trunc")
    d = xi - xh
    return float(np.sum(spec.weights * d * d))


def ergodicity_gradient(traj, mesh: TriMesh, spec: MetricSpec, coeffs: SpectralCoeffs,
                        grads: Optional[np.ndarray] = None) -> np.ndarray:
    """``dE/dx`` for every state, shape ``(A, S + 1, 2)``.

    States on shared edges use the lowest-index containing triangle.
    """
    s = _states(traj)
    pts = s.reshape(-1, 2)
    tris = mesh.locate_many(pts)
    if np.any(tris < 0):
        raise ValidationError("trajectory has states outside the mesh")
    if grads is None:
        grads = basis_gradients(mesh, spec.basis.truncated(spec.K_trunc))
    c = spec.weights * (np.asarray(coeffs.xi) - np.asarray(coeffs.xi_hat))
    g = (2.0 / len(pts)) * np.einsum("k,nkd->nd", c, grads[tris])
    return g.reshape(s.shape)


class ErgodicMetric:
    """Bundles mesh, density and basis for repeated metric evaluations."""

    def __init__(self, mesh: TriMesh, fm: FemMatrices, p: InfoDistribution, spec: MetricSpec):
        if spec.basis.mesh_hash != mesh.content_hash:
            raise ValidationError("metric basis was computed on a different mesh")
        self.mesh = mesh
        self.spec = spec
        self.xi_hat = map_coefficients(p, spec.basis, fm, spec.K_trunc)
        self.grads = basis_gradients(mesh, spec.basis.truncated(spec.K_trunc))
        self._vecs = spec.vectors

    def coefficients(self, traj) -> SpectralCoeffs:
        pts = _states(traj).reshape(-1, 2)
        tris = self.mesh.locate_many(pts)
        if np.any(tris < 0):
            raise ValidationError("trajectory has states outside the mesh")
        b = self.mesh.barycentric(tris, pts)
        xi = np.einsum("ni,nik->k", b, self._vecs[self.mesh.triangles[tris]]) / len(pts)
        return SpectralCoeffs(self.xi_hat, xi)

    def value(self, traj) -> float:
        return ergodicity(self.coefficients(traj), self.spec)

    def value_and_gradient(self, traj):
        c = self.coefficients(traj)
        return (ergodicity(c, self.spec),
                ergodicity_gradient(traj, self.mesh, self.spec, c, self.grads))


# ------------------------------------------------------------ Fourier baseline
def fourier_modes(K_modes: int) -> np.ndarray:
    """The ``K_modes`` index pairs ``(i, j)`` with smallest ``i^2 + j^2``."""
    r = int(math.ceil(math.sqrt(4.0 * K_modes / math.pi))) + 2
    ij = np.array([(i, j) for i in range(r) for j in range(r)])
    key = ij[:, 0] ** 2 + ij[:, 1] ** 2
    order = np.lexsort((ij[:, 1], ij[:, 0], key))
    return ij[order[:K_modes]]


@dataclass(frozen=True, eq=False)
class FourierMetric:
    """Cosine-basis ergodic metric on the bounding box in normalized coordinates."""

    box: tuple
    modes: np.ndarray
    weights: np.ndarray
    xi_hat: np.ndarray

    def _unit(self, pts):
        x0, y0, x1, y1 = self.box
        return (pts[:, 0] - x0) / (x1 - x0), (pts[:, 1] - y0) / (y1 - y0)

    def _norm(self):
        return np.where(self.modes > 0, math.sqrt(2.0), 1.0).prod(axis=1)

    def basis_values(self, pts) -> np.ndarray:
        s, t = self._unit(np.asarray(pts, dtype=float).reshape(-1, 2))
        i, j = self.modes[:, 0], self.modes[:, 1]
        return self._norm() * np.cos(np.pi * np.outer(s, i)) * np.cos(np.pi * np.outer(t, j))

    def coefficients(self, traj) -> np.ndarray:
        return self.basis_values(_states(traj).reshape(-1, 2)).mean(axis=0)

    def value(self, traj) -> float:
        d = self.coefficients(traj) - self.xi_hat
        return float(np.sum(self.weights * d * d))

    def gradient(self, traj) -> np.ndarray:
        s3 = _states(traj)
        pts = s3.reshape(-1, 2)
        d = self.coefficients(traj) - self.xi_hat
        c = self.weights * d * self._norm()
        s, t = self._unit(pts)
        i, j = self.modes[:, 0], self.modes[:, 1]
        cs, ct = np.cos(np.pi * np.outer(s, i)), np.cos(np.pi * np.outer(t, j))
        ss, st = np.sin(np.pi * np.outer(s, i)), np.sin(np.pi * np.outer(t, j))
        x0, y0, x1, y1 = self.box
        gx = (-np.pi * i * ss * ct) @ c / (x1 - x0)
        gy = (-np.pi * j * cs * st) @ c / (y1 - y0)
        g = (2.0 / len(pts)) * np.column_stack([gx, gy])
        return g.reshape(s3.shape)


def rasterize_density(mesh: TriMesh, p: InfoDistribution, box, n: int = RASTER_SIZE):
    """Cell-centre samples of ``p`` on an ``n x n`` grid over ``box`` (zero off-mesh)."""
    x0, y0, x1, y1 = box
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    ys = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    tris = mesh.locate_many(pts)
    vals = np.zeros(len(pts))
    ok = tris >= 0
    b = mesh.barycentric(tris[ok], pts[ok])
    vals[ok] = (b * p.density[mesh.triangles[tris[ok]]]).sum(1)
    return pts, vals.reshape(n, n)


def build_fourier_metric(mesh: TriMesh, p: InfoDistribution, K_modes: int, box=None,
                         n: int = RASTER_SIZE) -> FourierMetric:
    box = tuple(mesh.bbox if box is None else box)
    bx0, by0, bx1, by1 = box
    mx0, my0, mx1, my1 = mesh.bbox
    eps = 1e-12 * max(1.0, bx1 - bx0, by1 - by0)
    if mx0 < bx0 - eps or my0 < by0 - eps or mx1 > bx1 + eps or my1 > by1 + eps:
        raise ValidationError("the box must contain the mesh")
    modes = fourier_modes(K_modes)
    lam = np.pi ** 2 * (modes ** 2).sum(axis=1)
    weights = sobolev_weights(lam)
    pts, grid = rasterize_density(mesh, p, box, n)
    q = grid.ravel()
    if q.sum() <= 0:
        raise ValidationError("rasterized density is zero")
    q = q / q.mean()  # unit-box density
    fm = FourierMetric(box, modes, weights, np.zeros(len(modes)))
    xi_hat = (fm.basis_values(pts) * q[:, None]).mean(axis=0)
    return FourierMetric(box, modes, weights, xi_hat)


def fourier_metric(traj, box, raster, K_modes: int) -> float:
    """Fourier ergodicity of ``traj`` against a density raster over ``box``.

    ``raster`` is an ``(n, n)`` array of cell-centre densities (zero on obstacles).
    """
    raster = np.asarray(raster, dtype=float)
    n = raster.shape[0]
    x0, y0, x1, y1 = box
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    ys = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    modes = fourier_modes(K_modes)
    weights = sobolev_weights(np.pi ** 2 * (modes ** 2).sum(axis=1))
    fm = FourierMetric(tuple(box), modes, weights, np.zeros(len(modes)))
    q = raster.ravel() / raster.mean()
    xi_hat = (fm.basis_values(pts) * q[:, None]).mean(axis=0)
    return FourierMetric(tuple(box), modes, weights, xi_hat).value(traj)


def metric_csv_header() -> str:
    return "map,case,agents,metric_F,metric_LB,K_trunc,horizon,seed"
