import numpy as np
import pytest

from ergoflow.fem import assemble, solve_eigenbasis
from ergoflow.flow import build_flow_basis
from ergoflow.mesh import DistributionSpec, MapSpec, build_distribution, generate_map
from ergoflow.metric import ErgodicMetric, MetricSpec


class Setup:
    """Mesh, matrices, bases, density and flow for one map."""

    def __init__(self, kind, h, dist=DistributionSpec(), k_nat=40, n_fields=8):
        self.mesh = generate_map(MapSpec(kind, h))
        self.fm = assemble(self.mesh)
        self.p = build_distribution(self.mesh, dist, self.fm.M)
        self.natural = solve_eigenbasis(self.fm, "natural", k_nat)
        self.dirichlet = solve_eigenbasis(self.fm, "dirichlet", n_fields)
        self.flow = build_flow_basis(self.mesh, self.dirichlet, self.p, n_fields)
        self.metric = ErgodicMetric(self.mesh, self.fm, self.p, MetricSpec(self.natural, k_nat))


@pytest.fixture(scope="session")
def square():
    return Setup("square", 0.1)


@pytest.fixture(scope="session")
def square_fine():
    return Setup("square", 0.05, k_nat=60)


@pytest.fixture(scope="session")
def square_gauss():
    dist = DistributionSpec("gaussian", ((0.3, 0.6),), (0.15,), (1.0,))
    return Setup("square", 0.05, dist=dist)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
