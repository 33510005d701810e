"""P1 finite elements: mass/stiffness assembly and Laplacian eigenbases."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .errors import NumericalError, ValidationError
from .mesh.geometry import TriMesh

DENSE_MAX_DOF = 3000
BC_KINDS = ("dirichlet", "natural")
BASIS_HEADER = "ergobasis 1"


@dataclass(frozen=True, eq=False)
class FemMatrices:
    """Consistent mass ``M`` and stiffness ``K`` (CSR) of a mesh."""

    M: sp.csr_matrix
    K: sp.csr_matrix
    interior_index: np.ndarray
    mesh_hash: str

    @property
    def n(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """M-orthonormal eigenpairs ``K phi = lambda M phi`` (columns of ``vectors``)."""

    bc: str
    eigenvalues: np.ndarray
    vectors: np.ndarray
    mesh_hash: str

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def truncated(self, k: int) -> "SpectralBasis":
        if k > self.count:
            raise ValidationError(f"requested {k} modes but basis has {self.count}")
        return SpectralBasis(self.bc, self.eigenvalues[:k], self.vectors[:, :k], self.mesh_hash)


def element_matrices(mesh: TriMesh):
    """Per-triangle ``(m, 3, 3)`` mass and stiffness blocks."""
    area = mesh.areas
    bad = np.flatnonzero(~(area > 0))
    if len(bad):
        raise NumericalError(f"degenerate triangle {int(bad[0])} (area {area[bad[0]]:.3e})")
    Me = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
    g = mesh.hat_gradients
    Ke = area[:, None, None] * np.einsum("tik,tjk->tij", g, g)
    return Me, Ke


def _scatter(mesh, blocks):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    A = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def mass_matrix(mesh: TriMesh) -> sp.csr_matrix:
    Me, _ = element_matrices(mesh)
    return _scatter(mesh, Me)


def assemble(mesh: TriMesh) -> FemMatrices:
    Me, Ke = element_matrices(mesh)
    M = _scatter(mesh, Me)
    K = _scatter(mesh, Ke)
    interior = np.flatnonzero(~mesh.boundary_vertex_mask)
    return FemMatrices(M, K, interior, mesh.content_hash)


def inner_product(fm: FemMatrices, f, g) -> float:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape[0] != fm.n or g.shape[0] != fm.n:
        raise ValidationError(f"vectors must have length {fm.n}, got {f.shape[0]} and {g.shape[0]}")
    return float(f @ (fm.M @ g))


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def _solve_dense(K, M, count):
    w, V = scipy.linalg.eigh(K.toarray(), M.toarray(), subset_by_index=[0, count - 1],
                             driver="gvx")
    return w, V


def _solve_sparse(K, M, count, shift):
    n = K.shape[0]
    try:
        w, V = eigsh(K.tocsc(), k=count, M=M.tocsc(), sigma=shift, which="LM",
                     v0=np.ones(n), tol=0.0, maxiter=20 * n)
    except Exception as exc:  # ARPACK raises several unrelated types
        raise NumericalError(f"shift-invert Lanczos failed: {exc}") from exc
    # Rayleigh-Ritz cleanup restores M-orthonormality to round-off
    Kr = V.T @ (K @ V)
    Mr = V.T @ (M @ V)
    w, C = scipy.linalg.eigh(0.5 * (Kr + Kr.T), 0.5 * (Mr + Mr.T))
    return w, V @ C


def solve_eigenbasis(fm: FemMatrices, bc: str, count: int, *, dense: Optional[bool] = None,
                     cache_dir=None) -> SpectralBasis:
    """Lowest ``count`` eigenpairs for Dirichlet or natural boundary conditions.

    Dirichlet vectors are solved on interior vertices and zero-extended.  For
    natural conditions mode 0 is set to the exact constant ``1/sqrt(Area)``
    with eigenvalue 0.  Signs make the largest-magnitude entry positive.
    """
    if bc not in BC_KINDS:
        raise ValidationError(f"boundary condition must be one of {BC_KINDS}, got {bc!r}")
    if cache_dir is not None:
        path = basis_cache_path(cache_dir, fm.mesh_hash, bc, count)
        if os.path.exists(path):
            try:
                return load_basis(path, expect=(fm.mesh_hash, bc, count))
            except ValidationError:
                pass  # corrupt or stale cache entry; recompute
    if bc == "dirichlet":
        dofs = fm.interior_index
    else:
        dofs = np.arange(fm.n)
    ndof = len(dofs)
    if count < 1 or count > ndof:
        raise ValidationError(f"count must be in 1..{ndof} for {bc} conditions, got {count}")
    K = fm.K[dofs][:, dofs]
    M = fm.M[dofs][:, dofs]
    use_dense = ndof <= DENSE_MAX_DOF if dense is None else dense
    if use_dense or count >= ndof - 1:
        w, V = _solve_dense(K, M, count)
    else:
        w, V = _solve_sparse(K, M, count, shift=-1.0)
    order = np.argsort(w, kind="stable")
    w, V = w[order], V[:, order]
    if bc == "natural":
        area = float(M.sum())
        V[:, 0] = 1.0 / np.sqrt(area)
        w[0] = 0.0
    w = np.maximum(w, 0.0)
    V = _fix_signs(V)

    res = K @ V - (M @ V) * w
    rel = np.linalg.norm(res, axis=0) / np.maximum(1.0, np.abs(w)) / np.linalg.norm(M @ V, axis=0)
    if np.max(rel) > 1e-6:
        raise NumericalError(f"eigensolver residual {np.max(rel):.2e} too large "
                             f"(mode {int(np.argmax(rel))})")
    full = np.zeros((fm.n, count))
    full[dofs] = V
    basis = SpectralBasis(bc, w, full, fm.mesh_hash)
    basis.eigenvalues.setflags(write=False)
    basis.vectors.setflags(write=False)
    if cache_dir is not None:
        save_basis(basis, basis_cache_path(cache_dir, fm.mesh_hash, bc, count))
    return basis


# ------------------------------------------------------------ evaluation
def basis_gradients(mesh: TriMesh, basis: SpectralBasis) -> np.ndarray:
    """Constant gradient of every mode on every triangle, shape ``(m, count, 2)``."""
    vals = basis.vectors[mesh.triangles]  # (m, 3, count)
    return np.einsum("tik,tid->tkd", vals, mesh.hat_gradients)


def evaluate_basis_many(mesh: TriMesh, basis: SpectralBasis, points, tris=None):
    """Values ``(N, count)`` at ``points``; raises if any point is outside."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if tris is None:
        tris = mesh.locate_many(pts)
    tris = np.asarray(tris)
    if np.any(tris < 0):
        k = int(np.argmax(tris < 0))
        raise ValidationError(f"point {pts[k].tolist()} lies outside the mesh")
    b = mesh.barycentric(tris, pts)  # (N, 3)
    vals = basis.vectors[mesh.triangles[tris]]  # (N, 3, count)
    return np.einsum("ni,nik->nk", b, vals)


def evaluate_basis(mesh: TriMesh, basis: SpectralBasis, point) -> np.ndarray:
    return evaluate_basis_many(mesh, basis, np.asarray(point, dtype=float)[None])[0]


# ------------------------------------------------------------ cache
def basis_cache_path(cache_dir, mesh_hash, bc, count):
    return os.path.join(os.fspath(cache_dir), f"{mesh_hash[:24]}_{bc}_{count}.basis")


def basis_text(basis: SpectralBasis) -> str:
    n, k = basis.vectors.shape
    body = [BASIS_HEADER, basis.mesh_hash, basis.bc, f"{n} {k}",
            " ".join(f"{v:.17g}" for v in basis.eigenvalues.tolist())]
    body += [" ".join(f"{v:.17g}" for v in row) for row in basis.vectors.tolist()]
    payload = "\n".join(body) + "\n"
    digest = hashlib.sha256(payload.encode()).hexdigest()
    return payload + f"sha256 {digest}\n"


def save_basis(basis: SpectralBasis, path) -> None:
    os.makedirs(os.path.dirname(os.fspath(path)) or ".", exist_ok=True)
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(basis_text(basis))
    os.replace(tmp, path)


def load_basis(path, expect=None) -> SpectralBasis:
    """Read a cached basis, verifying its checksum (and key, if ``expect``)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    payload, sep, tail = text.rpartition("sha256 ")
    if not sep or hashlib.sha256(payload.encode()).hexdigest() != tail.strip():
        raise ValidationError(f"basis cache {path} failed checksum")
    lines = payload.splitlines()
    if len(lines) < 5 or lines[0] != BASIS_HEADER:
        raise ValidationError(f"basis cache {path} has a bad header")
    mesh_hash, bc = lines[1], lines[2]
    n, k = (int(s) for s in lines[3].split())
    if expect is not None and (mesh_hash, bc, k) != tuple(expect):
        raise ValidationError(f"basis cache {path} does not match the requested key")
    w = np.array(lines[4].split(), dtype=float)
    V = np.array([r.split() for r in lines[5:5 + n]], dtype=float).reshape(n, k)
    return SpectralBasis(bc, w, V, mesh_hash)
