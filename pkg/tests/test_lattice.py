import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandinterp.errors import DegenerateLattice, OutOfDomain, SingularMap
from bandinterp.lattice import (REFERENCE_SQUARE, REFERENCE_TRIANGLE, IrreducibleBZ, Lattice, LatticeKind,
                                MapKind, build_map, homography, ibz, map_point, reciprocal_lattice)

PI = np.pi


def test_reciprocal_axis_aligned():
    b1, b2 = reciprocal_lattice([0, 1], [1, 0])
    assert np.allclose(b1, [0, 2 * PI], atol=1e-15)
    assert np.allclose(b2, [2 * PI, 0], atol=1e-15)


def test_reciprocal_hexagonal_closed_form():
    b1, b2 = reciprocal_lattice([1, 0], [0.5, np.sqrt(3) / 2])
    assert np.allclose(b1, 2 * PI * np.array([1, -1 / np.sqrt(3)]), rtol=1e-14)
    assert np.allclose(b2, 2 * PI * np.array([0, 2 / np.sqrt(3)]), rtol=1e-14)


def test_parallel_vectors_rejected():
    with pytest.raises(DegenerateLattice):
        reciprocal_lattice([1, 0], [1, 0])
    with pytest.raises(DegenerateLattice):
        reciprocal_lattice([1, 0], [2, 1e-16])


@settings(max_examples=100, deadline=None)
@given(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.1, np.pi - 0.1), st.floats(0, 2 * np.pi))
def test_reciprocal_duality(l1, l2, angle, rot):
    a1 = l1 * np.array([np.cos(rot), np.sin(rot)])
    a2 = l2 * np.array([np.cos(rot + angle), np.sin(rot + angle)])
    b1, b2 = reciprocal_lattice(a1, a2)
    G = np.vstack([b1, b2]) @ np.column_stack([a1, a2])
    assert np.max(np.abs(G - 2 * PI * np.eye(2))) <= 1e-12 * 2 * PI * max(1, l1 / l2, l2 / l1)


@pytest.mark.parametrize("kind", list(LatticeKind))
def test_generated_lattices_dual(kind):
    assert Lattice.from_kind(kind).reciprocal_error() <= 1e-12 * 2 * PI


def test_ibz_square():
    z = ibz(Lattice.square())
    assert np.allclose(z.vertices, [[0, 0], [PI, 0], [PI, PI]], atol=1e-15)
    assert z.labels == ("Γ", "X", "M")
    z2 = ibz(Lattice.square(a=2.0))
    assert np.allclose(z2.vertices, [[0, 0], [PI / 2, 0], [PI / 2, PI / 2]], atol=1e-15)


def test_ibz_hexagonal():
    z = ibz(Lattice.hexagonal())
    assert np.allclose(z.vertices, [[0, 0], [4 * PI / 3, 0], [PI, np.sqrt(3) * PI / 3]], atol=1e-14)
    assert z.labels == ("Γ", "K", "M")


def _angles(v):
    out = []
    for i in range(3):
        a, b = v[(i + 1) % 3] - v[i], v[(i + 2) % 3] - v[i]
        out.append(np.arccos(np.dot(a, b) / np.linalg.norm(a) / np.linalg.norm(b)))
    return np.sort(np.degrees(out))


def test_ibz_angles():
    assert np.allclose(_angles(ibz(Lattice.square()).vertices), [45, 45, 90], atol=np.degrees(1e-10))
    assert np.allclose(_angles(ibz(Lattice.hexagonal()).vertices), [30, 60, 90], atol=np.degrees(1e-10))


@pytest.mark.parametrize("kind", list(LatticeKind))
def test_reflected_quad_convex_ccw(kind):
    z = ibz(Lattice.from_kind(kind))
    q = z.reflected_quad
    assert np.allclose(z.vertices[0], 0)
    for i in range(4):
        e1, e2 = q[(i + 1) % 4] - q[i], q[(i + 2) % 4] - q[(i + 1) % 4]
        assert e1[0] * e2[1] - e1[1] * e2[0] > 0
    # mirror of the IBZ lies in the quad; quad area is twice the triangle
    area = 0.5 * abs(sum(q[i, 0] * q[(i + 1) % 4, 1] - q[(i + 1) % 4, 0] * q[i, 1] for i in range(4)))
    assert np.isclose(area, 2 * z.area, rtol=1e-12)
    assert np.all(z.quad_contains(z.mirror(z.vertices)))


@pytest.mark.parametrize("kind", list(LatticeKind))
def test_mirror_edge_is_longest(kind):
    z = ibz(Lattice.from_kind(kind))
    v = z.vertices
    lengths = [np.linalg.norm(v[(i + 1) % 3] - v[i]) for i in range(3)]
    i, j = z.mirror_edge
    assert np.isclose(np.linalg.norm(v[j] - v[i]), max(lengths))


def test_affine_identity():
    tri = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    z = IrreducibleBZ(tri, ("A", "B", "C"), np.zeros((4, 2)), (1, 2), LatticeKind.SQUARE)
    m = build_map(z, MapKind.AFFINE_TRIANGLE)
    assert np.allclose(m.matrix, np.eye(3))


def test_parallelogram_gives_affine_homography():
    H = homography(REFERENCE_SQUARE, [[0, 0], [2, 0], [3, 1], [1, 1]])
    assert np.allclose(H[2, :2], 0, atol=1e-14)


def test_homography_rank_deficient():
    with pytest.raises(SingularMap):
        homography(REFERENCE_SQUARE, [[0, 0], [0, 0], [0, 0], [0, 0]])


@pytest.mark.parametrize("kind", list(LatticeKind))
def test_map_corners_exact(kind):
    z = ibz(Lattice.from_kind(kind))
    tri = build_map(z, MapKind.AFFINE_TRIANGLE)
    quad = build_map(z, MapKind.PROJECTIVE_QUAD)
    assert np.max(np.abs(tri.forward(REFERENCE_TRIANGLE) - z.vertices)) <= 1e-12
    assert np.max(np.abs(quad.forward(REFERENCE_SQUARE) - z.reflected_quad)) <= 1e-12
    assert np.allclose(map_point(tri, [1 / 3, 1 / 3]), z.vertices.mean(axis=0), atol=1e-14)


@pytest.mark.parametrize("kind", list(LatticeKind))
def test_round_trip(kind, rng):
    z = ibz(Lattice.from_kind(kind))
    quad = build_map(z, MapKind.PROJECTIVE_QUAD)
    p = rng.uniform(-1, 1, (1000, 2))
    assert np.max(np.abs(quad.inverse(quad.forward(p)) - p)) <= 1e-10
    tri = build_map(z, MapKind.AFFINE_TRIANGLE)
    p = rng.dirichlet([1, 1, 1], 1000)[:, :2]
    assert np.max(np.abs(tri.inverse(tri.forward(p)) - p)) <= 1e-10


def test_quad_edge_midpoints_on_edges():
    z = ibz(Lattice.square())
    quad = build_map(z, MapKind.PROJECTIVE_QUAD)
    q = z.reflected_quad
    for i in range(4):
        mid = 0.5 * (REFERENCE_SQUARE[i] + REFERENCE_SQUARE[(i + 1) % 4])
        k = quad.forward(mid)[0]
        a, b = q[i], q[(i + 1) % 4]
        e = b - a
        assert abs(e[0] * (k[1] - a[1]) - e[1] * (k[0] - a[0])) <= 1e-12 * np.linalg.norm(e)


def test_out_of_domain():
    z = ibz(Lattice.square())
    with pytest.raises(OutOfDomain):
        build_map(z, MapKind.AFFINE_TRIANGLE).forward([[0.6, 0.6]])
    with pytest.raises(OutOfDomain):
        build_map(z, MapKind.PROJECTIVE_QUAD).forward([[1.1, 0.0]])
    build_map(z, MapKind.AFFINE_TRIANGLE).forward([[0.5 + 5e-11, 0.5]])
