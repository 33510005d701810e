"""Information distributions on a mesh."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ValidationError
from .geometry import TriMesh

FLOOR_FRACTION = 1e-6


@dataclass(frozen=True)
class DistributionSpec:
    """``kind`` is ``"uniform"`` or ``"gaussian"``.

    A Gaussian mixture takes ``centers`` (k, 2), ``weights`` (k,) and either
    isotropic standard deviations ``sigmas`` (k,) or full ``covariances``
    (k, 2, 2).
    """

    kind: str = "uniform"
    centers: tuple = ()
    sigmas: tuple = ()
    weights: tuple = ()
    covariances: tuple = ()

    def validate(self):
        if self.kind == "uniform":
            return self
        if self.kind != "gaussian":
            raise ValidationError(f"unknown distribution kind {self.kind!r}")
        k = len(self.centers)
        if k == 0:
            raise ValidationError("gaussian mixture needs at least one component")
        w = self.weights if len(self.weights) else (1.0,) * k
        if len(w) != k or any(not (wi > 0) for wi in w):
            raise ValidationError("mixture weights must be positive, one per center")
        if not len(self.covariances) and any(not (s > 0) for s in self.sigmas):
            raise ValidationError("mixture standard deviations must be positive")
        covs = self.component_covariances()
        for c in covs:
            if not np.all(np.isfinite(c)) or np.any(np.linalg.eigvalsh(c) <= 0):
                raise ValidationError("mixture covariances must be symmetric positive definite")
        return self

    def component_covariances(self) -> np.ndarray:
        k = len(self.centers)
        if len(self.covariances):
            covs = np.asarray(self.covariances, dtype=float).reshape(k, 2, 2)
            return 0.5 * (covs + covs.transpose(0, 2, 1))
        if len(self.sigmas) != k:
            raise ValidationError("give one sigma (or covariance) per mixture center")
        s = np.asarray(self.sigmas, dtype=float)
        return (s ** 2)[:, None, None] * np.eye(2)

    def pdf(self, points) -> np.ndarray:
        """Unnormalized-on-mesh mixture density at ``points`` (..., 2)."""
        p = np.asarray(points, dtype=float)
        if self.kind == "uniform":
            return np.ones(p.shape[:-1])
        c = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        w = np.asarray(self.weights if len(self.weights) else np.ones(len(c)), dtype=float)
        w = w / w.sum()
        covs = self.component_covariances()
        out = np.zeros(p.shape[:-1])
        for cj, wj, Sj in zip(c, w, covs):
            inv = np.linalg.inv(Sj)
            d = p - cj
            q = np.einsum("...i,ij,...j->...", d, inv, d)
            out += wj * np.exp(-0.5 * q) / (2 * np.pi * np.sqrt(np.linalg.det(Sj)))
        return out


@dataclass(frozen=True, eq=False)
class InfoDistribution:
    """Per-vertex probability density on a mesh.

    ``density`` holds nonnegative vertex values normalized so that
    ``1^T M p = 1``.  ``scale`` maps the analytic ``spec.pdf`` to the same
    normalization (``None`` for tabulated densities without a spec).
    """

    density: np.ndarray
    spec: Optional[DistributionSpec] = None
    scale: Optional[float] = None
    floor: float = field(init=False)

    def __post_init__(self):
        d = np.array(self.density, dtype=np.float64)
        if d.ndim != 1 or not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValidationError("density must be a finite nonnegative vector")
        if d.max() <= 0:
            raise ValidationError("density is identically zero")
        d.setflags(write=False)
        object.__setattr__(self, "density", d)
        object.__setattr__(self, "floor", FLOOR_FRACTION * float(d.max()))

    def floored(self) -> np.ndarray:
        return np.maximum(self.density, self.floor)

    def centroid_values(self, mesh: TriMesh) -> np.ndarray:
        """Floored density interpolated at triangle centroids."""
        return np.maximum(self.density[mesh.triangles].mean(axis=1), self.floor)

    def evaluate(self, mesh: TriMesh, tri, points, floored=True) -> np.ndarray:
        """Density at ``points`` lying in triangles ``tri``.

        Uses the analytic mixture when available, otherwise P1 interpolation.
        """
        points = np.asarray(points, dtype=float)
        if self.spec is not None and self.scale is not None:
            val = self.scale * self.spec.pdf(points)
        else:
            b = mesh.barycentric(tri, points)
            val = (b * self.density[mesh.triangles[np.asarray(tri)]]).sum(-1)
        return np.maximum(val, self.floor) if floored else val


def build_distribution(mesh: TriMesh, spec: DistributionSpec, mass=None,
                       require_connected=True) -> InfoDistribution:
    """Evaluate ``spec`` at the vertices and normalize against the mass matrix."""
    from ..fem import mass_matrix
    from ..sampler import support_connected

    spec.validate()
    M = mass_matrix(mesh) if mass is None else mass
    raw = spec.pdf(mesh.vertices)
    total = float(np.ones(mesh.n_vertices) @ (M @ raw))
    if not (total > 1e-12) or raw.max() <= 0:
        raise ValidationError(
            "distribution has no mass on the free space (all mixture mass lies on obstacles)"
        )
    scale = 1.0 / total
    dist = InfoDistribution(raw * scale, spec=spec, scale=scale)
    # one Newton-style correction removes the rounding left by the division
    err = float(np.ones(mesh.n_vertices) @ (M @ dist.density))
    if abs(err - 1.0) > 1e-14:
        dist = InfoDistribution(dist.density / err, spec=spec, scale=scale / err)
    if require_connected and not support_connected(mesh, dist):
        raise ValidationError(
            "support of the distribution is disconnected; random flows cannot be ergodic"
        )
    return dist
