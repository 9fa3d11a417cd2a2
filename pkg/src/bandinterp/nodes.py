"""Interpolation node families on the reference triangle T and square S."""

from __future__ import annotations

import enum
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import legendre
from scipy.optimize import minimize

from .errors import OptimizationStalled, RankDeficiency, SingularVandermonde
from .interp import Domain, PolyBasis, cardinal_values, domain_size

NODE_FORMAT_HEADER = "# bandinterp-nodes v1"
CACHE_MAX_DEGREE = 10
INSIDE_TOL = 1e-12
MIN_SEPARATION = 1e-8


class NodeKind(str, enum.Enum):
    FEKETE = "fekete"
    MEAN_OPTIMAL = "meanopt"
    IMPROVED_LOBATTO = "lobatto"
    CHEB1 = "cheb1"
    CHEB2 = "cheb2"

    @property
    def domain(self):
        return Domain.SQUARE if self in (NodeKind.CHEB1, NodeKind.CHEB2) else Domain.TRIANGLE


@dataclass
class NodeSet:
    domain: Domain
    degree: int
    points: np.ndarray
    kind: NodeKind
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.domain = Domain(self.domain)
        self.kind = NodeKind(self.kind)
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        N = domain_size(self.domain, self.degree)
        if self.points.shape != (N, 2):
            raise ValueError(f"{self.kind.value} degree {self.degree} needs {N} points, got {self.points.shape}")
        if not np.all(inside(self.domain, self.points, INSIDE_TOL)):
            raise ValueError("node outside the closed reference domain")
        if N > 1 and min_separation(self.points) <= MIN_SEPARATION:
            raise ValueError("nodes are not pairwise distinct")

    def __len__(self):
        return len(self.points)

    @property
    def basis(self):
        return PolyBasis(self.domain, self.degree)


def inside(domain, p, tol=INSIDE_TOL):
    p = np.atleast_2d(p)
    if Domain(domain) is Domain.TRIANGLE:
        return (p[:, 0] >= -tol) & (p[:, 1] >= -tol) & (p.sum(axis=1) <= 1.0 + tol)
    return np.all(np.abs(p) <= 1.0 + tol, axis=1)


def min_separation(p):
    from scipy.spatial.distance import pdist

    return float(pdist(p).min())


def _clean_triangle(p):
    """Snap roundoff so points sit exactly in the closed triangle."""
    p = np.where(np.abs(p) < 1e-14, 0.0, p)
    p = np.clip(p, 0.0, 1.0)
    s = p.sum(axis=1)
    over = s > 1.0
    p[over] /= s[over, None]
    return p


def _snap_boundary(p, tol=1e-9):
    """Put points within ``tol`` of an edge of T exactly on it."""
    p = _clean_triangle(p)
    p[np.abs(p) < tol] = 0.0
    s = p.sum(axis=1)
    near = np.abs(s - 1.0) < tol
    p[near] /= s[near, None]
    return p


def edge_counts(p, tol=1e-12):
    """Number of points on the edges y = 0, x = 0 and x + y = 1 of T."""
    p = np.atleast_2d(p)
    return [int(np.sum(np.abs(p[:, 1]) <= tol)), int(np.sum(np.abs(p[:, 0]) <= tol)),
            int(np.sum(np.abs(p.sum(axis=1) - 1.0) <= tol))]


def triangle_grid(d):
    """Uniform barycentric grid of degree d on T, (d+1)(d+2)/2 points."""
    i, j = np.meshgrid(np.arange(d + 1), np.arange(d + 1), indexing="ij")
    keep = i + j <= d
    return np.column_stack([i[keep], j[keep]]) / float(d)


def log_abs_det(points, basis):
    _, logdet = np.linalg.slogdet(basis(points))
    return float(logdet)


def l2_objective(points, basis):
    """||L||_2 = integral over T of sum_i l_i^2 = ||V^{-1}||_F^2 in an orthonormal basis."""
    V = basis(points)
    try:
        W = np.linalg.inv(V)
    except np.linalg.LinAlgError:
        return np.inf
    return float(np.sum(W * W))


def gauss_lobatto(n):
    """n + 1 Gauss-Lobatto nodes on [-1, 1], ascending."""
    if n == 1:
        return np.array([-1.0, 1.0])
    interior = legendre.Legendre.basis(n).deriv().roots()
    return np.concatenate([[-1.0], np.sort(interior.real), [1.0]])


def improved_lobatto(n: int) -> NodeSet:
    if n < 1:
        raise ValueError("degree must be >= 1")
    v = 0.5 * (1.0 + gauss_lobatto(n))
    pts = []
    for i in range(1, n + 2):
        for j in range(1, n + 3 - i):
            k = n + 3 - i - j
            vi, vj, vk = v[i - 1], v[j - 1], v[k - 1]
            pts.append(((1 + 2 * vj - vi - vk) / 3.0, (1 + 2 * vi - vj - vk) / 3.0))
    pts = _clean_triangle(np.array(pts))
    basis = PolyBasis(Domain.TRIANGLE, n)
    return NodeSet(Domain.TRIANGLE, n, pts, NodeKind.IMPROVED_LOBATTO,
                   {"log_abs_det": log_abs_det(pts, basis), "l2_norm": l2_objective(pts, basis)})


def _local_patch(p, step, radius):
    offs = np.arange(-radius, radius + 1) * step
    dx, dy = np.meshgrid(offs, offs)
    cand = p + np.column_stack([dx.ravel(), dy.ravel()])
    return _clean_triangle(cand[inside(Domain.TRIANGLE, cand, 2 * step)])


def _fekete_ascent(pts, basis, grid, d, rounds=10):
    """Single-point coordinate ascent on |det V|.

    Replacing node i by x multiplies det V by l_i(x), so each move goes to
    the best |l_i| over the global grid and a fine patch around the node.
    """
    pts = pts.copy()
    step = 0.25 / d
    for _ in range(rounds):
        moved = False
        for i in range(len(pts)):
            cand = np.vstack([grid, _local_patch(pts[i], step, 8)])
            V = basis(pts)
            li = np.linalg.solve(V.T, basis(cand).T)[i]
            best = int(np.argmax(np.abs(li)))
            if abs(li[best]) > 1.0 + 1e-9:
                trial = pts.copy()
                trial[i] = cand[best]
                if min_separation(trial) > MIN_SEPARATION:
                    pts = trial
                    moved = True
        if not moved:
            break
    return pts


def fekete(n: int, density: int | None = None, rounds: int = 10) -> NodeSet:
    """Approximate Fekete points: greedy pivoted QR on a candidate grid, then
    coordinate ascent; the ascent is also run from the improved Lobatto set
    and the larger determinant wins."""
    if n < 1:
        raise ValueError("degree must be >= 1")
    d = density or max(30, 4 * n)
    basis = PolyBasis(Domain.TRIANGLE, n)
    N = basis.size
    grid = triangle_grid(d)
    Vc = basis(grid)
    _, R, piv = sla.qr(Vc.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if len(diag) < N or diag[N - 1] <= 1e-12 * diag[0]:
        raise RankDeficiency(f"candidate grid of degree {d} cannot supply {N} independent nodes")
    # True Fekete sets carry n + 1 nodes on every edge; local maxima that
    # lose this structure are ranked below those that keep it.
    starts = [grid[piv[:N]], improved_lobatto(n).points]
    best, best_key = None, None
    for p0 in starts:
        p = _polish_det(_fekete_ascent(p0, basis, grid, d, rounds), basis)
        key = (edge_counts(p) == [n + 1] * 3, log_abs_det(p, basis))
        if best_key is None or key > best_key:
            best, best_key = p, key
    return NodeSet(Domain.TRIANGLE, n, best, NodeKind.FEKETE,
                   {"log_abs_det": log_abs_det(best, basis), "l2_norm": l2_objective(best, basis),
                    "candidate_degree": d})


def _triangle_constraints(N):
    """x >= 0, y >= 0, 1 - x - y >= 0 for every node, as one linear block."""
    A = np.zeros((3 * N, 2 * N))
    b = np.zeros(3 * N)
    for i in range(N):
        A[3 * i, 2 * i] = 1.0
        A[3 * i + 1, 2 * i + 1] = 1.0
        A[3 * i + 2, 2 * i:2 * i + 2] = -1.0
        b[3 * i + 2] = 1.0
    return {"type": "ineq", "fun": lambda x: A @ x + b, "jac": lambda x: A}


def _polish_det(pts, basis, maxiter=500):
    """Continuous local ascent of log|det V| under the triangle constraints."""
    N = len(pts)

    def fun(x):
        P = x.reshape(N, 2)
        V = basis(P)
        sign, logdet = np.linalg.slogdet(V)
        if sign == 0:
            return 1e300, np.zeros_like(x)
        W = np.linalg.inv(V)
        g = np.einsum("ji,ijc->ic", W, basis.gradient(P))
        return -logdet, -g.ravel()

    res = minimize(fun, pts.ravel(), jac=True, method="SLSQP", constraints=[_triangle_constraints(N)],
                   options={"maxiter": maxiter, "ftol": 1e-13})
    P = _snap_boundary(res.x.reshape(N, 2))
    if log_abs_det(P, basis) > log_abs_det(pts, basis) and min_separation(P) > MIN_SEPARATION:
        return P
    return pts


def l2_gradient(points, basis):
    """Gradient of ||V^{-1}||_F^2 with respect to the node coordinates (N, 2)."""
    V = basis(points)
    W = np.linalg.inv(V)
    M = W @ W.T @ W
    G = basis.gradient(points)  # (N, N, 2): node i, basis j, direction
    return -2.0 * np.einsum("ji,ijc->ic", M, G)


def mean_optimal(n: int, initial: NodeSet | None = None, maxiter: int = 2000) -> NodeSet:
    """Local minimizer of ||L||_2 starting from ``initial`` (improved Lobatto by default)."""
    if initial is None:
        initial = improved_lobatto(n)
    basis = PolyBasis(Domain.TRIANGLE, n)
    x0 = initial.points.ravel().copy()
    f0 = l2_objective(initial.points, basis)
    if not np.isfinite(f0):
        raise SingularVandermonde("initial node set is singular")
    N = basis.size

    def fun(x):
        P = x.reshape(N, 2)
        f = l2_objective(P, basis)
        if not np.isfinite(f):
            return 1e300, np.zeros_like(x)
        return f, l2_gradient(P, basis).ravel()

    res = minimize(fun, x0, jac=True, method="SLSQP", constraints=[_triangle_constraints(N)],
                   options={"maxiter": maxiter, "ftol": 1e-14})
    P = _clean_triangle(res.x.reshape(N, 2))
    f1 = l2_objective(P, basis)
    meta = {"l2_norm": f0, "log_abs_det": log_abs_det(initial.points, basis),
            "start": initial.kind.value, "iterations": int(res.nit)}
    ok = np.isfinite(f1) and f1 <= f0 and (N == 1 or min_separation(P) > MIN_SEPARATION)
    if not ok or (f1 >= f0 and n > 1):
        meta["stalled"] = True
        warnings.warn(str(OptimizationStalled(f"no decrease of ||L||_2 from {f0:.6g}")), RuntimeWarning, stacklevel=2)
        return NodeSet(Domain.TRIANGLE, n, initial.points.copy(), NodeKind.MEAN_OPTIMAL, meta)
    meta.update(l2_norm=f1, log_abs_det=log_abs_det(P, basis))
    return NodeSet(Domain.TRIANGLE, n, P, NodeKind.MEAN_OPTIMAL, meta)


def cheb1_points(n):
    k = np.arange(n + 1)
    return np.cos((2 * k + 1) * np.pi / (2 * (n + 1)))


def cheb2_points(n):
    return np.cos(np.arange(n + 1) * np.pi / n)


def _tensor(x):
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def cheb1_tensor(n: int) -> NodeSet:
    if n < 1:
        raise ValueError("degree must be >= 1")
    return NodeSet(Domain.SQUARE, n, _tensor(cheb1_points(n)), NodeKind.CHEB1)


def cheb2_tensor(n: int) -> NodeSet:
    if n < 1:
        raise ValueError("degree must be >= 1")
    x = cheb2_points(n)
    x[np.abs(x) < 1e-15] = 0.0
    return NodeSet(Domain.SQUARE, n, _tensor(x), NodeKind.CHEB2)


def lebesgue_1d(nodes, grid):
    """max over ``grid`` of sum_i |l_i(x)| for 1D nodes (barycentric formula)."""
    nodes = np.asarray(nodes, dtype=float)
    w = np.array([1.0 / np.prod(xj - np.delete(nodes, j)) for j, xj in enumerate(nodes)])
    diff = grid[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-15)
    diff[exact] = 1.0
    terms = w / diff
    L = np.abs(terms).sum(axis=1) / np.abs(terms.sum(axis=1))
    L[exact.any(axis=1)] = 1.0
    return float(L.max())


def evaluation_grid(domain, density):
    if Domain(domain) is Domain.TRIANGLE:
        return triangle_grid(density)
    return _tensor(np.linspace(-1.0, 1.0, density + 1))


def lebesgue_estimate(nodes: NodeSet, density: int = 200) -> float:
    """Lower bound of the Lebesgue constant: max of sum |l_i| on a uniform grid
    with ``density + 1`` points per edge."""
    grid = evaluation_grid(nodes.domain, density)
    total = 0.0
    for chunk in np.array_split(grid, max(1, len(grid) // 5000)):
        L = cardinal_values(nodes, chunk)
        total = max(total, float(np.abs(L).sum(axis=1).max()))
    return total


GENERATORS = {
    NodeKind.FEKETE: fekete,
    NodeKind.MEAN_OPTIMAL: mean_optimal,
    NodeKind.IMPROVED_LOBATTO: improved_lobatto,
    NodeKind.CHEB1: cheb1_tensor,
    NodeKind.CHEB2: cheb2_tensor,
}


def write_nodes(ns: NodeSet, path):
    lines = [NODE_FORMAT_HEADER, f"domain {ns.domain.value}", f"kind {ns.kind.value}", f"degree {ns.degree}"]
    for k in sorted(ns.metadata):
        v = ns.metadata[k]
        lines.append(f"meta {k} {v:.17g}" if isinstance(v, float) else f"meta {k} {v}")
    lines.append(f"points {len(ns)}")
    lines += [f"{x:.17g} {y:.17g}" for x, y in ns.points]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_meta(v):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return {"True": True, "False": False}.get(v, v)


def read_nodes(path) -> NodeSet:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != NODE_FORMAT_HEADER:
        raise ValueError(f"{path}: not a node file")
    head, meta, i = {}, {}, 1
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if parts[0] == "meta":
            meta[parts[1]] = _parse_meta(" ".join(parts[2:]))
        elif parts[0] == "points":
            count = int(parts[1])
            pts = np.array([[float(t) for t in ln.split()] for ln in lines[i:i + count]]).reshape(count, 2)
            return NodeSet(Domain(head["domain"]), int(head["degree"]), pts, NodeKind(head["kind"]), meta)
        else:
            head[parts[0]] = parts[1]
    raise ValueError(f"{path}: missing points section")


def default_cache_dir():
    root = os.environ.get("BANDINTERP_CACHE")
    return Path(root) if root else Path.home() / ".cache" / "bandinterp"


def node_set(kind, n: int, cache_dir=None, use_cache: bool = True) -> NodeSet:
    """Node set of the given kind and degree; degrees up to 10 are cached on disk."""
    kind = NodeKind(kind)
    if not use_cache or n > CACHE_MAX_DEGREE or kind in (NodeKind.CHEB1, NodeKind.CHEB2, NodeKind.IMPROVED_LOBATTO):
        return GENERATORS[kind](n)
    path = Path(cache_dir or default_cache_dir()) / "nodes" / f"{kind.value}-{n}.txt"
    if path.exists():
        try:
            return read_nodes(path)
        except (ValueError, KeyError, IndexError):
            pass  # regenerate damaged entries
    ns = GENERATORS[kind](n)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(f".tmp{os.getpid()}")
    write_nodes(ns, tmp)
    os.replace(tmp, path)
    return ns
