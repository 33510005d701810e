import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergoflow.errors import ValidationError
from ergoflow.fem import assemble, evaluate_basis, solve_eigenbasis
from ergoflow.flow import build_flow_basis
from ergoflow.mesh import DistributionSpec, MapSpec, build_distribution, generate_map
from ergoflow.mesh.density import InfoDistribution
from ergoflow.metric import (ErgodicMetric, MetricSpec, SpectralCoeffs, build_fourier_metric,
                             ergodicity, ergodicity_gradient, fourier_metric, fourier_modes,
                             map_coefficients, metric_csv_header, rasterize_density,
                             sobolev_weights, trajectory_coefficients)
from ergoflow.sampler import integrate, sample_schedule


def _interior_states(mesh, rng, n, margin=0.05):
    """Random points kept well inside their triangle (barycentrics > margin)."""
    t = rng.integers(0, mesh.n_triangles, n)
    b = rng.dirichlet(np.ones(3), n)
    b = margin + (1 - 3 * margin) * b
    return np.einsum("ni,nid->nd", b, mesh.vertices[mesh.triangles[t]])


def test_uniform_map_coefficients(square):
    xh = map_coefficients(square.p, square.natural, square.fm, 40)
    assert xh[0] == pytest.approx(1.0, abs=1e-8)
    assert np.max(np.abs(xh[1:])) < 1e-8


def test_map_coefficient_recovers_mode_amplitude(square):
    phi3 = square.natural.vectors[:, 3]
    c = 0.5 / np.max(np.abs(phi3))
    p = InfoDistribution(1.0 + c * phi3)
    xh = map_coefficients(p, square.natural, square.fm, 10)
    assert xh[3] == pytest.approx(c, abs=1e-8)


def test_map_coefficients_match_element_quadrature(square_gauss):
    s = square_gauss
    K = 12
    xh = map_coefficients(s.p, s.natural, s.fm, K)
    brute = np.zeros(K)
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    for t, tri in enumerate(s.mesh.triangles):
        pv = s.p.density[tri]
        fv = s.natural.vectors[tri, :K]
        brute += s.mesh.areas[t] * (pv @ local @ fv)
    assert np.allclose(xh, brute, rtol=0, atol=1e-10)


def test_trajectory_coefficient_identities(square, rng):
    m, nat = square.mesh, square.natural
    q = np.array([0.37, 0.61])
    still = np.repeat(q[None, None], 11, axis=1)
    assert np.allclose(trajectory_coefficients(still, nat, m, 20), evaluate_basis(m, nat, q)[:20],
                       rtol=0, atol=1e-13)
    a = _interior_states(m, rng, 30)
    b = _interior_states(m, rng, 30)
    xi_a = trajectory_coefficients(a, nat, m, 20)
    doubled = np.repeat(a, 2, axis=0)
    assert np.allclose(trajectory_coefficients(doubled, nat, m, 20), xi_a, atol=1e-14)
    two = np.stack([a, b])
    seq = np.concatenate([a, b])[None]
    assert np.allclose(trajectory_coefficients(two, nat, m, 20),
                       trajectory_coefficients(seq, nat, m, 20), atol=1e-14)
    # the metric object agrees with the free function
    assert np.allclose(square.metric.coefficients(two).xi,
                       trajectory_coefficients(two, nat, m, 40), atol=1e-14)


def test_ergodicity_basic_values(square):
    spec = square.metric.spec
    xh = square.metric.xi_hat
    assert ergodicity(SpectralCoeffs(xh, xh.copy()), spec) == 0.0
    d = xh.copy()
    d[0] += 0.3
    assert ergodicity(SpectralCoeffs(xh, d), spec) == pytest.approx(0.09, rel=1e-12)
    with pytest.raises(ValidationError):
        ergodicity(SpectralCoeffs(xh[:3], xh[:3]), spec)


def test_stationary_center_against_direct_sum(square):
    q = np.array([0.5, 0.5])
    nat = square.natural
    phi = evaluate_basis(square.mesh, nat, q)
    xh = square.metric.xi_hat
    w = (1 + np.sqrt(nat.eigenvalues)) ** -2
    direct = sum(w[k] * (phi[k] - xh[k]) ** 2 for k in range(40))
    assert square.metric.value(q[None, None]) == pytest.approx(direct, rel=1e-12)


def test_gradient_zero_at_target(square, rng):
    x = _interior_states(square.mesh, rng, 10)
    xh = square.metric.xi_hat
    g = ergodicity_gradient(x, square.mesh, square.metric.spec, SpectralCoeffs(xh, xh))
    assert np.all(g == 0)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_central_differences(square, seed):
    rng = np.random.default_rng(seed)
    x = _interior_states(square.mesh, rng, 25).reshape(1, 25, 2)
    E, g = square.metric.value_and_gradient(x)
    fd = np.zeros_like(x)
    h = 1e-6
    for n in range(25):
        for d in range(2):
            xp, xm = x.copy(), x.copy()
            xp[0, n, d] += h
            xm[0, n, d] -= h
            fd[0, n, d] = (square.metric.value(xp) - square.metric.value(xm)) / (2 * h)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-4


def test_shift_within_triangle_is_linear(square, rng):
    x = _interior_states(square.mesh, rng, 12)
    base = square.metric.coefficients(x).xi
    step = np.zeros_like(x)
    step[4] = (1e-4, -2e-4)
    one = square.metric.coefficients(x + step).xi - base
    two = square.metric.coefficients(x + 2 * step).xi - base
    assert np.allclose(two, 2 * one, rtol=0, atol=1e-15)
    # per-triangle basis gradients are constant, so the gradient moves linearly too
    def grad(y):
        return ergodicity_gradient(y, square.mesh, square.metric.spec,
                                   square.metric.coefficients(y))
    g0 = grad(x)
    assert np.allclose(grad(x + 2 * step) - g0, 2 * (grad(x + step) - g0), rtol=0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 39))
def test_invariants(seed, K):
    s = _SQ
    rng = np.random.default_rng(seed)
    x = np.stack([_interior_states(s["mesh"], rng, 8) for _ in range(3)])
    c = s["metric"].coefficients(x)
    E = ergodicity(c, s["metric"].spec)
    assert E >= 0
    perm = x[[2, 0, 1]]
    assert s["metric"].value(perm) == pytest.approx(E, rel=1e-13)
    g = s["metric"].value_and_gradient(x)[1]
    gp = s["metric"].value_and_gradient(perm)[1]
    assert np.allclose(gp, g[[2, 0, 1]], rtol=1e-12, atol=1e-14)
    short = MetricSpec(s["natural"], K)
    Es = ergodicity(SpectralCoeffs(c.xi_hat[:K], c.xi[:K]), short)
    assert Es <= E + 1e-15


def test_metric_spec_validation(square):
    with pytest.raises(ValidationError):
        MetricSpec(square.dirichlet, 4)
    with pytest.raises(ValidationError):
        MetricSpec(square.natural, 41)
    other = generate_map(MapSpec("square", 0.25))
    with pytest.raises(ValidationError):
        ErgodicMetric(other, assemble(other), square.p, square.metric.spec)
    with pytest.raises(ValidationError):
        square.metric.value(np.array([[[1.5, 0.5]]]))


def test_sobolev_weights():
    assert np.allclose(sobolev_weights([0.0, 4.0, 9.0]), [1.0, 1 / 9, 1 / 16])


# ------------------------------------------------------------ Fourier baseline
def test_fourier_modes_order():
    ij = fourier_modes(6)
    assert ij.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1], [0, 2], [2, 0]]


def test_fourier_uniform_square_has_only_constant_mode(square):
    F = build_fourier_metric(square.mesh, square.p, 50)
    assert F.xi_hat[0] == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(F.xi_hat[1:])) < 1e-12


def test_fourier_free_function_matches(square, rng):
    x = _interior_states(square.mesh, rng, 40)
    F = build_fourier_metric(square.mesh, square.p, 30, n=64)
    _, raster = rasterize_density(square.mesh, square.p, square.mesh.bbox, 64)
    assert fourier_metric(x, square.mesh.bbox, raster, 30) == pytest.approx(F.value(x), rel=1e-12)
    with pytest.raises(ValidationError):
        build_fourier_metric(square.mesh, square.p, 10, box=(0.2, 0.2, 0.8, 0.8))


def test_fourier_gradient_matches_differences(square, rng):
    F = build_fourier_metric(square.mesh, square.p, 30, n=64)
    x = _interior_states(square.mesh, rng, 10)[None]
    g = F.gradient(x)
    fd = np.zeros_like(x)
    h = 1e-6
    for n in range(10):
        for d in range(2):
            xp, xm = x.copy(), x.copy()
            xp[0, n, d] += h
            xm[0, n, d] -= h
            fd[0, n, d] = (F.value(xp) - F.value(xm)) / (2 * h)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6


def test_fourier_and_lb_comparable_on_long_random_flow():
    m = generate_map(MapSpec("square", 0.025))
    fm = assemble(m)
    p = build_distribution(m, DistributionSpec(), fm.M)
    nat = solve_eigenbasis(fm, "natural", 100)
    flow = build_flow_basis(m, solve_eigenbasis(fm, "dirichlet", 8), p, 8)
    tr = integrate(m, flow, sample_schedule(8, 80.0, 0.5, 0), [(0.5, 0.5)], 0.05, 1.0, 80.0)
    LB = ErgodicMetric(m, fm, p, MetricSpec(nat, 100)).value(tr)
    F = build_fourier_metric(m, p, 100).value(tr)
    assert F < 0.01
    assert abs(F - LB) / LB < 0.2


def test_csv_header():
    assert metric_csv_header().split(",") == ["map", "case", "agents", "metric_F", "metric_LB",
                                              "K_trunc", "horizon", "seed"]


_SQ = {}


def _setup_sq():
    m = generate_map(MapSpec("square", 0.1))
    fm = assemble(m)
    p = build_distribution(m, DistributionSpec("gaussian", ((0.4, 0.6),), (0.2,)), fm.M)
    nat = solve_eigenbasis(fm, "natural", 40)
    _SQ.update(mesh=m, natural=nat, metric=ErgodicMetric(m, fm, p, MetricSpec(nat, 40)))


_setup_sq()
