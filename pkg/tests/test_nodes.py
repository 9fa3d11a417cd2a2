import warnings

import numpy as np
import pytest

from bandinterp.errors import RankDeficiency
from bandinterp.interp import Domain, PolyBasis
from bandinterp.nodes import (NodeKind, NodeSet, cheb1_tensor, cheb2_points, cheb2_tensor, edge_counts, fekete,
                              gauss_lobatto, improved_lobatto, l2_gradient, l2_objective, lebesgue_1d,
                              lebesgue_estimate, log_abs_det, mean_optimal, node_set, read_nodes, triangle_grid,
                              write_nodes)

VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
TRI_KINDS = [NodeKind.FEKETE, NodeKind.MEAN_OPTIMAL, NodeKind.IMPROVED_LOBATTO]


def same_set(a, b, tol=1e-12):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return bool(np.all(d.min(axis=1) <= tol) and np.all(d.min(axis=0) <= tol))


def rotate(p):
    """120 degree rotation of T: barycentric (l0, l1, l2) -> (l2, l0, l1)."""
    return np.column_stack([1 - p[:, 0] - p[:, 1], p[:, 0]])


def test_gauss_lobatto_nodes():
    assert np.allclose(gauss_lobatto(1), [-1, 1])
    assert np.allclose(gauss_lobatto(2), [-1, 0, 1])
    assert np.allclose(gauss_lobatto(4), [-1, -np.sqrt(3 / 7), 0, np.sqrt(3 / 7), 1])


def test_lobatto_small_cases():
    assert same_set(improved_lobatto(1).points, VERTICES)
    mids = [[0.5, 0], [0.5, 0.5], [0, 0.5]]
    assert same_set(improved_lobatto(2).points, np.vstack([VERTICES, mids]))


@pytest.mark.parametrize("n", range(1, 11))
def test_lobatto_rotation_symmetric(n):
    p = improved_lobatto(n).points
    assert same_set(rotate(p), p, 1e-12)
    assert same_set(p[:, ::-1], p, 1e-12)


@pytest.mark.parametrize("kind", list(NodeKind))
def test_cardinality_and_unisolvence(kind):
    for n in range(1, 11):
        ns = node_set(kind, n)
        N = (n + 1) * (n + 2) // 2 if kind.domain is Domain.TRIANGLE else (n + 1) ** 2
        assert len(ns) == N and ns.degree == n and ns.kind is kind
        assert np.linalg.cond(ns.basis(ns.points)) <= 1e8


def test_fekete_degree_one():
    assert same_set(fekete(1).points, VERTICES)


@pytest.mark.parametrize("n", range(1, 11))
def test_fekete_edge_points(n):
    assert edge_counts(node_set(NodeKind.FEKETE, n).points) == [n + 1] * 3


def test_fekete_dominance():
    for n in range(2, 9):
        b = PolyBasis(Domain.TRIANGLE, n)
        f = log_abs_det(node_set(NodeKind.FEKETE, n).points, b)
        lo = log_abs_det(improved_lobatto(n).points, b)
        uni = log_abs_det(triangle_grid(n), b)
        assert f >= lo - 1e-12 >= uni - 1e-12, n


def test_fekete_degree_eight():
    ns = node_set(NodeKind.FEKETE, 8)
    assert len(ns) == 45
    assert lebesgue_estimate(ns, 100) <= 12


def test_fekete_rank_deficient_grid():
    with pytest.raises(RankDeficiency):
        fekete(6, density=3)


def test_mean_optimal_degree_one_stationary():
    start = improved_lobatto(1)
    g = l2_gradient(start.points, start.basis)
    # constrained stationarity: every feasible direction at a vertex is ascent
    for i, v in enumerate(VERTICES):
        for w in np.delete(VERTICES, i, axis=0):
            assert np.dot(g[i], w - v) >= 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = mean_optimal(1, start)
    assert same_set(out.points, VERTICES)


def test_mean_optimal_degree_four():
    start = improved_lobatto(4)
    out = mean_optimal(4, start)
    assert l2_objective(out.points, out.basis) < l2_objective(start.points, start.basis)
    assert lebesgue_estimate(out, 100) <= 1.1 * lebesgue_estimate(start, 100)


def test_l2_gradient_matches_finite_difference(rng):
    ns = improved_lobatto(3)
    p = ns.points + 0.01 * rng.uniform(size=ns.points.shape) * (ns.points.sum(axis=1, keepdims=True) < 0.9)
    g = l2_gradient(p, ns.basis)
    e = 1e-6
    for i in (0, 4, 7):
        for c in range(2):
            dp = np.zeros_like(p)
            dp[i, c] = e
            fd = (l2_objective(p + dp, ns.basis) - l2_objective(p - dp, ns.basis)) / (2 * e)
            assert g[i, c] == pytest.approx(fd, rel=1e-5, abs=1e-7)


@pytest.mark.parametrize("kind", TRI_KINDS)
def test_l2_lower_bound(kind):
    for n in range(1, 9):
        ns = node_set(kind, n)
        assert l2_objective(ns.points, ns.basis) >= 0.5 / len(ns)


def test_cheb1():
    ns = cheb1_tensor(1)
    assert same_set(ns.points, np.array([[a, b] for a in (-1, 1) for b in (-1, 1)]) * np.sqrt(2) / 2)
    ns = cheb1_tensor(4)
    assert len(ns) == 25
    assert np.sum(ns.points[:, 0] >= ns.points[:, 1] - 1e-15) == 15
    for n in range(1, 11):
        assert np.all(np.abs(cheb1_tensor(n).points) < 1)


def test_cheb2():
    ns = cheb2_tensor(2)
    assert same_set(ns.points, np.array([[a, b] for a in (-1, 0, 1) for b in (-1, 0, 1)], dtype=float))
    p = cheb2_tensor(8).points
    assert len(p) == 81
    assert np.sum(np.any(np.abs(np.abs(p) - 1) < 1e-15, axis=1)) == 32
    for n in range(1, 11):
        x = cheb2_points(n)
        assert np.allclose(np.sort(x), np.sort(-x), atol=1e-15)


def test_lebesgue_vertices_is_one():
    assert lebesgue_estimate(improved_lobatto(1), 50) == pytest.approx(1.0, abs=1e-12)


def test_lebesgue_tensor_identity():
    d = 200
    est = lebesgue_estimate(cheb2_tensor(8), d)
    one_d = lebesgue_1d(cheb2_points(8), np.linspace(-1, 1, d + 1))
    assert est == pytest.approx(one_d**2, abs=1e-6)


def test_lebesgue_1d_oracle():
    # two nodes at +-1: linear interpolation, constant 1
    assert lebesgue_1d(np.array([-1.0, 1.0]), np.linspace(-1, 1, 101)) == pytest.approx(1.0)
    # three equispaced nodes: max of |l0|+|l1|+|l2| is 1.25 at x = +-1/2
    assert lebesgue_1d(np.array([-1.0, 0.0, 1.0]), np.linspace(-1, 1, 201)) == pytest.approx(1.25)


@pytest.mark.parametrize("kind", list(NodeKind))
def test_lebesgue_monotone_in_density(kind):
    ns = node_set(kind, 6)
    # the 2d grid contains the d grid
    assert lebesgue_estimate(ns, 40) <= lebesgue_estimate(ns, 80) + 1e-12


def _fit(x, y):
    return np.polyfit(np.log(x), np.log(y), 1)[0]


@pytest.mark.parametrize("kind", TRI_KINDS)
def test_triangle_lebesgue_growth(kind):
    sets = [node_set(kind, n) for n in range(2, 9)]
    L = [lebesgue_estimate(s, 100) for s in sets]
    assert _fit([len(s) for s in sets], L) <= 0.75


@pytest.mark.parametrize("kind", [NodeKind.CHEB1, NodeKind.CHEB2])
def test_tensor_lebesgue_growth(kind):
    sets = [node_set(kind, n) for n in range(2, 9)]
    L = [lebesgue_estimate(s, 100) for s in sets]
    assert _fit([np.log(len(s)) for s in sets], L) <= 2.0


@pytest.mark.parametrize("kind", list(NodeKind))
def test_node_file_round_trip(kind, tmp_path):
    ns = node_set(kind, 5)
    write_nodes(ns, tmp_path / "n.txt")
    back = read_nodes(tmp_path / "n.txt")
    assert np.array_equal(back.points, ns.points)
    assert back.kind is ns.kind and back.degree == 5 and back.domain is ns.domain
    assert (tmp_path / "n.txt").read_text().startswith("# bandinterp-nodes v1")


def test_disk_cache_reused(tmp_path):
    a = node_set(NodeKind.FEKETE, 4, cache_dir=tmp_path)
    assert (tmp_path / "nodes" / "fekete-4.txt").exists()
    b = node_set(NodeKind.FEKETE, 4, cache_dir=tmp_path)
    assert np.array_equal(a.points, b.points)
    (tmp_path / "nodes" / "fekete-4.txt").write_text("garbage\n")
    c = node_set(NodeKind.FEKETE, 4, cache_dir=tmp_path)
    assert np.array_equal(a.points, c.points)


def test_nodeset_validation():
    with pytest.raises(ValueError):
        NodeSet(Domain.TRIANGLE, 1, VERTICES[:2], NodeKind.FEKETE)
    with pytest.raises(ValueError):
        NodeSet(Domain.TRIANGLE, 1, VERTICES + [0.1, 0.1], NodeKind.FEKETE)
    with pytest.raises(ValueError):
        NodeSet(Domain.TRIANGLE, 1, [[0, 0], [0, 0], [0, 1]], NodeKind.FEKETE)
