import numpy as np
import pytest

from ergoflow.errors import ValidationError
from ergoflow.fem import (assemble, basis_cache_path, element_matrices, evaluate_basis,
                          evaluate_basis_many, inner_product, load_basis, solve_eigenbasis)
from ergoflow.mesh import DistributionSpec, MapSpec, TriMesh, build_distribution, generate_map


def test_mass_sums_to_area_and_constants_harmonic(square):
    fm = square.fm
    assert abs(fm.M.sum() - 1.0) < 1e-10
    assert np.max(np.abs(fm.K @ np.ones(fm.n))) < 1e-12
    for kind, h in (("maze", 0.05), ("rooms", 0.05)):
        f = assemble(generate_map(MapSpec(kind, h)))
        assert np.max(np.abs(f.K @ np.ones(f.n))) < 1e-12


def test_reference_element_mass():
    m = TriMesh(np.array([[0, 0], [1, 0], [0, 1]], dtype=float), np.array([[0, 1, 2]]))
    Me, Ke = element_matrices(m)
    expect = 0.5 / 12 * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
    assert np.allclose(Me[0], expect, atol=1e-15)
    # hat gradients (-1,-1), (1,0), (0,1) on area 1/2
    assert np.allclose(Ke[0], 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]))


def test_inner_products(square):
    fm, nat = square.fm, square.natural
    one = np.ones(fm.n)
    assert inner_product(fm, one, one) == pytest.approx(1.0, abs=1e-10)
    assert inner_product(fm, nat.vectors[:, 3], nat.vectors[:, 3]) == pytest.approx(1.0, abs=1e-8)
    assert inner_product(fm, one, square.p.density) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValidationError):
        inner_product(fm, one[:-1], one)


@pytest.mark.parametrize("bc", ["natural", "dirichlet"])
def test_gram_and_rayleigh(square, bc):
    basis = square.natural if bc == "natural" else square.dirichlet
    V, w = basis.vectors, basis.eigenvalues
    G = V.T @ (square.fm.M @ V)
    assert np.max(np.abs(G - np.eye(basis.count))) < 1e-8
    rq = np.einsum("ik,ik->k", V, square.fm.K @ V)
    assert np.all(np.abs(rq - w) < 1e-8 * (1 + w))
    assert np.all(np.diff(w) >= 0)


def test_dirichlet_zero_on_boundary(square):
    V = square.dirichlet.vectors
    assert np.all(V[square.mesh.boundary_vertex_mask] == 0.0)


def test_constant_mode_exact(square):
    v0 = square.natural.vectors[:, 0]
    assert square.natural.eigenvalues[0] == 0.0
    assert np.all(v0 == v0[0])
    assert v0[0] == pytest.approx(1.0, abs=1e-8)


def test_sign_convention(square):
    V = square.natural.vectors
    idx = np.argmax(np.abs(V), axis=0)
    assert np.all(V[idx, np.arange(V.shape[1])] > 0)


def test_square_spectrum_coarse(square_fine):
    # nonzero pi^2 (i^2 + j^2) values in increasing order
    exact = np.sort([np.pi ** 2 * (i * i + j * j) for i in range(6) for j in range(6)])[1:11]
    got = square_fine.natural.eigenvalues[1:11]
    assert np.all(np.abs(got - exact) / exact < 0.05)
    assert square_fine.dirichlet.eigenvalues[0] == pytest.approx(2 * np.pi ** 2, rel=0.05)


def test_eigenvalue_convergence_order():
    errs = []
    for h in (0.1, 0.05):
        fm = assemble(generate_map(MapSpec("square", h)))
        lam = solve_eigenbasis(fm, "natural", 2).eigenvalues[1]
        errs.append(abs(lam - np.pi ** 2) / np.pi ** 2)
    assert errs[0] / errs[1] >= 3.0


def test_dense_and_sparse_agree():
    fm = assemble(generate_map(MapSpec("rooms", 0.05)))
    a = solve_eigenbasis(fm, "natural", 12, dense=True)
    b = solve_eigenbasis(fm, "natural", 12, dense=False)
    assert np.allclose(a.eigenvalues, b.eigenvalues, rtol=1e-9, atol=1e-9)
    # compare projectors so degenerate subspaces do not matter
    Pa = a.vectors @ a.vectors.T
    Pb = b.vectors @ b.vectors.T
    assert np.max(np.abs(Pa - Pb)) < 1e-6


def test_bad_requests(square):
    with pytest.raises(ValidationError):
        solve_eigenbasis(square.fm, "robin", 3)
    with pytest.raises(ValidationError):
        solve_eigenbasis(square.fm, "natural", 0)
    with pytest.raises(ValidationError):
        square.natural.truncated(square.natural.count + 1)


def test_evaluation_interpolates(square):
    mesh, nat = square.mesh, square.natural
    for v in (0, 17, mesh.n_vertices - 1):
        assert np.array_equal(evaluate_basis(mesh, nat, mesh.vertices[v]), nat.vectors[v])
    a, b = mesh.triangles[5, 0], mesh.triangles[5, 1]
    mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
    assert np.allclose(evaluate_basis(mesh, nat, mid), 0.5 * (nat.vectors[a] + nat.vectors[b]),
                       atol=1e-14)
    pts = np.random.default_rng(1).random((50, 2))
    vals = evaluate_basis_many(mesh, nat, pts)
    assert np.allclose(vals[:, 0], 1.0, atol=1e-8)
    with pytest.raises(ValidationError):
        evaluate_basis(mesh, nat, (1.5, 0.5))


def test_basis_cache_roundtrip_and_corruption(tmp_path):
    fm = assemble(generate_map(MapSpec("square", 0.1)))
    a = solve_eigenbasis(fm, "natural", 6, cache_dir=tmp_path)
    path = basis_cache_path(tmp_path, fm.mesh_hash, "natural", 6)
    b = load_basis(path)
    assert np.array_equal(a.vectors, b.vectors) and np.array_equal(a.eigenvalues, b.eigenvalues)
    text = open(path).read()
    with open(path, "w") as fh:
        fh.write(text.replace("ergobasis 1\n", "ergobasis 1\n ", 1))
    with pytest.raises(ValidationError, match="checksum"):
        load_basis(path)
    c = solve_eigenbasis(fm, "natural", 6, cache_dir=tmp_path)
    assert np.array_equal(c.vectors, a.vectors)
    assert open(path).read() == text


def test_gaussian_density_inner_product():
    m = generate_map(MapSpec("maze", 0.05))
    fm = assemble(m)
    p = build_distribution(m, DistributionSpec("gaussian", ((0.2, 0.2),), (0.2,)), fm.M)
    assert inner_product(fm, np.ones(fm.n), p.density) == pytest.approx(1.0, abs=1e-10)
