import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergoflow.errors import MeshParseError, ValidationError
from ergoflow.fem import mass_matrix
from ergoflow.mesh import (DistributionSpec, MapSpec, TriMesh, build_distribution,
                           generate_map, load_mesh, locate_point, locate_point_exhaustive,
                           save_mesh)
from ergoflow.mesh.density import FLOOR_FRACTION
from ergoflow.mesh.io import parse_distribution, parse_mesh, distribution_text
from ergoflow.mesh.maps import room_centers


def test_square_counts():
    m = generate_map(MapSpec("square", 0.5))
    assert m.n_vertices == 9
    assert m.n_triangles == 8
    assert m.area == pytest.approx(1.0, abs=1e-14)


def test_triangles_are_ccw_and_adjacency_symmetric():
    m = generate_map(MapSpec("square", 0.1))
    assert np.all(m.areas > 0)
    for t in range(m.n_triangles):
        for nb in m.adjacency[t]:
            if nb >= 0:
                assert t in m.adjacency[nb]


def test_boundary_edges_of_square():
    m = generate_map(MapSpec("square", 0.25))
    assert len(m.boundary_edges) == 16
    assert m.boundary_vertex_mask.sum() == 16


@pytest.mark.parametrize("verts,tris,msg", [
    ([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]], "signed area"),
    ([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]], "signed area"),
    ([[0, 0], [1, 0], [0, 1]], [[0, 1, 3]], "outside"),
    ([[0, 0], [1, 0], [0, 1], [5, 5]], [[0, 1, 2]], "not used"),
    ([[0, 0], [1, 0], [0, 1], [3, 3], [4, 3], [3, 4]], [[0, 1, 2], [3, 4, 5]], "components"),
    ([[np.nan, 0], [1, 0], [0, 1]], [[0, 1, 2]], "finite"),
])
def test_invalid_meshes_rejected(verts, tris, msg):
    with pytest.raises(ValidationError, match=msg):
        TriMesh(np.array(verts, dtype=float), np.array(tris))


def test_inconsistent_orientation_rejected():
    v = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    # second triangle is clockwise only through its shared edge order
    with pytest.raises(ValidationError):
        TriMesh(v, np.array([[0, 1, 2], [0, 3, 2]]))


def test_mesh_roundtrip(tmp_path):
    m = generate_map(MapSpec("rooms", 0.05))
    path = tmp_path / "rooms.mesh"
    save_mesh(m, path)
    back = load_mesh(path)
    assert back == m
    assert back.content_hash == m.content_hash


@pytest.mark.parametrize("text,line", [
    ("bogus 1\n", 1),
    ("ergomesh 1\n3\n1\n0 0\n1 0\nx 1\n0 1 2\n", 6),
    ("ergomesh 1\n3\n1\n0 0\n1 0\n0 1\n0 1\n", 7),
    ("ergomesh 1\n3\n1\n0 0\n1 0\n0 1\n0 1 2\nextra\n", 8),
])
def test_parse_errors_report_line(text, line):
    with pytest.raises(MeshParseError) as info:
        parse_mesh(text)
    assert info.value.line == line


def test_parse_rejects_out_of_range_index():
    with pytest.raises(ValidationError):
        parse_mesh("ergomesh 1\n3\n1\n0 0\n1 0\n0 1\n0 1 3\n")


def test_maps_are_connected_with_expected_area():
    maze = generate_map(MapSpec("maze", 0.025))
    assert maze.area < 1.0
    cshape = generate_map(MapSpec("cshape", 0.025))
    assert cshape.area == pytest.approx(1.0 - 0.7 * 0.2, abs=1e-12)
    rooms = generate_map(MapSpec("rooms", 0.04))
    # two discs plus the corridor parts outside them
    assert 2 * np.pi * 0.25 < rooms.area < 2 * np.pi * 0.25 + 2 * 0.12 * 1.5


def test_rooms_centers_inside():
    spec = MapSpec("rooms", 0.04)
    m = generate_map(spec)
    assert np.all(m.locate_many(room_centers(spec)) >= 0)


def test_map_generation_deterministic():
    a = generate_map(MapSpec("rooms", 0.05))
    b = generate_map(MapSpec("rooms", 0.05))
    assert a.to_text() == b.to_text()


def test_narrow_corridor_rejected():
    with pytest.raises(ValidationError, match="corridor"):
        MapSpec("rooms", 0.07).validate()


def test_unknown_map_kind():
    with pytest.raises(ValidationError):
        generate_map(MapSpec("spiral", 0.1))


# ------------------------------------------------------------ point location
@settings(max_examples=200, deadline=None)
@given(st.floats(-0.2, 1.2), st.floats(-0.2, 1.2), st.integers(-1, 199))
def test_walk_matches_exhaustive_square(x, y, hint):
    m = _SQUARE
    a = locate_point(m, (x, y), hint if hint < m.n_triangles else None)
    b = locate_point_exhaustive(m, (x, y))
    assert (a is None) == (b is None)
    if a is not None:
        assert a[0] == b[0]
        assert np.allclose(a[1], b[1])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10), st.integers(0, 10))
def test_grid_vertices_resolve_to_lowest_index(i, j):
    m = _SQUARE
    p = (i / 10, j / 10)
    t, b = locate_point(m, p)
    containing = [k for k in range(m.n_triangles)
                  if np.all(m.barycentric(k, np.array(p)) >= -1e-12)]
    assert t == min(containing)
    assert b.sum() == pytest.approx(1.0)


def test_locate_many_in_maze_obstacles():
    m = generate_map(MapSpec("maze", 0.025))
    rng = np.random.default_rng(0)
    pts = rng.random((2000, 2))
    fast = m.locate_many(pts)
    slow = np.array([-1 if (r := locate_point_exhaustive(m, p)) is None else r[0] for p in pts])
    assert np.array_equal(fast, slow)
    assert np.any(fast < 0)


# ------------------------------------------------------------ distributions
def test_uniform_density_normalized():
    m = generate_map(MapSpec("maze", 0.05))
    M = mass_matrix(m)
    p = build_distribution(m, DistributionSpec(), M)
    assert abs(np.ones(m.n_vertices) @ (M @ p.density) - 1.0) < 1e-10
    assert np.allclose(p.density, 1.0 / m.area)


def test_gaussian_density_normalized_and_floored():
    m = generate_map(MapSpec("square", 0.05))
    M = mass_matrix(m)
    spec = DistributionSpec("gaussian", ((0.2, 0.2), (0.8, 0.7)), (0.05, 0.1), (1.0, 2.0))
    p = build_distribution(m, spec, M)
    assert abs(np.ones(m.n_vertices) @ (M @ p.density) - 1.0) < 1e-10
    assert p.floor == pytest.approx(FLOOR_FRACTION * p.density.max())
    assert p.floored().min() >= p.floor


def test_full_covariance_matches_isotropic():
    m = generate_map(MapSpec("square", 0.1))
    iso = build_distribution(m, DistributionSpec("gaussian", ((0.5, 0.5),), (0.2,), (1.0,)))
    full = build_distribution(m, DistributionSpec("gaussian", ((0.5, 0.5),), (), (1.0,),
                                                  (((0.04, 0.0), (0.0, 0.04)),)))
    assert np.allclose(iso.density, full.density, rtol=1e-13)


def test_disconnected_support_rejected():
    m = generate_map(MapSpec("square", 0.025))
    spec = DistributionSpec("gaussian", ((0.05, 0.05), (0.95, 0.95)), (0.01, 0.01), (1.0, 1.0))
    with pytest.raises(ValidationError, match="connected"):
        build_distribution(m, spec)


@pytest.mark.parametrize("spec", [
    DistributionSpec("gaussian"),
    DistributionSpec("gaussian", ((0.5, 0.5),), (-0.1,)),
    DistributionSpec("gaussian", ((0.5, 0.5),), (0.1,), (0.0,)),
    DistributionSpec("cauchy"),
])
def test_bad_distribution_specs(spec):
    with pytest.raises(ValidationError):
        spec.validate()


def test_distribution_roundtrip():
    m = generate_map(MapSpec("square", 0.1))
    p = build_distribution(m, DistributionSpec("gaussian", ((0.4, 0.4),), (0.2,), (1.0,)))
    back = parse_distribution(distribution_text(p), m)
    assert np.array_equal(back.density, p.density)
    with pytest.raises(ValidationError):
        parse_distribution(distribution_text(p), generate_map(MapSpec("square", 0.5)))


_SQUARE = generate_map(MapSpec("square", 0.1))
