"""Lattice geometry, Brillouin-zone wedges and reference-domain maps.

All k-space quantities are in units of 1/a with the lattice constant a = 1
internally; ``Lattice.lattice_constant`` only rescales at I/O time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateLattice,
    OutOfDomain,
    SingularMap,
    UnsupportedLattice,
)

TWO_PI = 2.0 * np.pi
DOMAIN_TOL = 1e-10


class LatticeKind(str, enum.Enum):
    SQUARE = "square"
    HEXAGONAL = "hexagonal"


class MapKind(str, enum.Enum):
    AFFINE_TRIANGLE = "affine_triangle"
    PROJECTIVE_QUAD = "projective_quad"


def reciprocal_lattice(a1, a2):
    """Return ``(b1, b2)`` with ``b_i . a_j = 2 pi delta_ij``."""
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    det = a1[0] * a2[1] - a1[1] * a2[0]
    if abs(det) < 1e-14 * np.linalg.norm(a1) * np.linalg.norm(a2) or det == 0.0:
        raise DegenerateLattice("primitive vectors are linearly dependent")
    # Rows of 2*pi*inv(A) with A = [a1 a2] as columns.
    A = np.column_stack([a1, a2])
    B = TWO_PI * np.linalg.inv(A)
    return B[0].copy(), B[1].copy()


@dataclass(frozen=True)
class Lattice:
    kind: LatticeKind
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    lattice_constant: float = 1.0

    @classmethod
    def square(cls, a=1.0):
        # Primitive vectors in the order the band-structure literature uses
        # for this cell: a1 along y, a2 along x.
        a1 = np.array([0.0, 1.0])
        a2 = np.array([1.0, 0.0])
        b1, b2 = reciprocal_lattice(a1, a2)
        return cls(LatticeKind.SQUARE, a1, a2, b1, b2, float(a))

    @classmethod
    def hexagonal(cls, a=1.0):
        a1 = np.array([1.0, 0.0])
        a2 = np.array([0.5, np.sqrt(3.0) / 2.0])
        b1, b2 = reciprocal_lattice(a1, a2)
        return cls(LatticeKind.HEXAGONAL, a1, a2, b1, b2, float(a))

    @classmethod
    def from_kind(cls, kind, a=1.0):
        kind = LatticeKind(kind)
        if kind is LatticeKind.SQUARE:
            return cls.square(a)
        return cls.hexagonal(a)

    @property
    def cell_area(self):
        return abs(self.a1[0] * self.a2[1] - self.a1[1] * self.a2[0])

    def reciprocal_error(self):
        """max |b_i . a_j - 2 pi delta_ij|."""
        B = np.vstack([self.b1, self.b2])
        A = np.column_stack([self.a1, self.a2])
        return float(np.max(np.abs(B @ A - TWO_PI * np.eye(2))))


@dataclass(frozen=True)
class IrreducibleBZ:
    """IBZ triangle (Gamma first) plus the quad obtained by mirroring it
    across its longest edge.

    ``reflected_quad`` is ordered counterclockwise as ``[P, X1, Q, X2]`` where
    ``PQ`` is the mirror edge; the S-diagonal from (-1,-1) to (1,1) therefore
    maps onto the mirror line.
    """

    vertices: np.ndarray
    labels: tuple
    reflected_quad: np.ndarray
    mirror_edge: tuple
    lattice_kind: LatticeKind

    @property
    def area(self):
        return _tri_area(self.vertices)

    def contains(self, k, tol=1e-10):
        lam = barycentric(self.vertices, np.atleast_2d(k))
        return np.all(lam >= -tol, axis=1)

    def quad_contains(self, k, tol=1e-10):
        k = np.atleast_2d(k)
        q = self.reflected_quad
        inside = np.ones(len(k), dtype=bool)
        for i in range(4):
            p0, p1 = q[i], q[(i + 1) % 4]
            e = p1 - p0
            cross = e[0] * (k[:, 1] - p0[1]) - e[1] * (k[:, 0] - p0[0])
            inside &= cross >= -tol * np.linalg.norm(e)
        return inside

    def mirror(self, k):
        """Reflect points across the mirror edge of the IBZ."""
        p = self.vertices[self.mirror_edge[0]]
        q = self.vertices[self.mirror_edge[1]]
        return _reflect(np.atleast_2d(k), p, q)


def _tri_area(v):
    return 0.5 * abs((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1])
                     - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1]))


def _reflect(k, p, q):
    d = (q - p) / np.linalg.norm(q - p)
    r = k - p
    along = r @ d
    return p + 2.0 * along[:, None] * d[None, :] - r


def barycentric(tri, pts):
    """Barycentric coordinates of ``pts`` (M, 2) w.r.t. triangle ``tri`` (3, 2)."""
    tri = np.asarray(tri, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    T = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    lam12 = np.linalg.solve(T, (pts - tri[0]).T).T
    return np.column_stack([1.0 - lam12.sum(axis=1), lam12])


def ibz(lattice: Lattice) -> IrreducibleBZ:
    kind = LatticeKind(lattice.kind)
    # pipelines use a = 1; other lattice constants scale the zone as 1/a
    a = float(lattice.lattice_constant)
    if kind is LatticeKind.SQUARE:
        verts = np.array([[0.0, 0.0], [np.pi / a, 0.0], [np.pi / a, np.pi / a]])
        labels = ("Γ", "X", "M")
    elif kind is LatticeKind.HEXAGONAL:
        verts = np.array([[0.0, 0.0], [4.0 * np.pi / (3.0 * a), 0.0],
                          [np.pi / a, np.sqrt(3.0) * np.pi / (3.0 * a)]])
        labels = ("Γ", "K", "M")
    else:  # pragma: no cover - enum guards this
        raise UnsupportedLattice(str(kind))
    return _build_ibz(verts, labels, kind)


def _build_ibz(verts, labels, kind):
    edges = [(0, 1), (1, 2), (2, 0)]
    lengths = [np.linalg.norm(verts[j] - verts[i]) for i, j in edges]
    # strict comparison: ties go to the lowest edge index
    best = 0
    for e in range(1, 3):
        if lengths[e] > lengths[best] * (1.0 + 1e-12):
            best = e
    i, j = edges[best]
    P, Q = sorted((i, j))
    opposite = 3 - P - Q
    A = verts[opposite]
    A_m = _reflect(A[None, :], verts[P], verts[Q])[0]
    quad = np.array([verts[P], A, verts[Q], A_m])
    if _signed_area(quad) < 0:
        quad = np.array([verts[P], A_m, verts[Q], A])
    return IrreducibleBZ(verts, labels, quad, (P, Q), kind)


def _signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


REFERENCE_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REFERENCE_SQUARE = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


@dataclass(frozen=True)
class DomainMap:
    kind: MapKind
    matrix: np.ndarray
    inverse_matrix: np.ndarray = field(repr=False)

    def forward(self, p, check=True):
        """Map reference points (M, 2) to k-space (M, 2)."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        if check:
            _check_reference(self.kind, p)
        return _apply_h(self.matrix, p)

    def inverse(self, k):
        return _apply_h(self.inverse_matrix, np.atleast_2d(np.asarray(k, dtype=float)))


def _apply_h(H, p):
    ph = np.column_stack([p, np.ones(len(p))]) @ H.T
    return ph[:, :2] / ph[:, 2:3]


def _check_reference(kind, p):
    if kind is MapKind.AFFINE_TRIANGLE:
        bad = (p[:, 0] < -DOMAIN_TOL) | (p[:, 1] < -DOMAIN_TOL) | (p.sum(axis=1) > 1.0 + DOMAIN_TOL)
    else:
        bad = np.any(np.abs(p) > 1.0 + DOMAIN_TOL, axis=1)
    if np.any(bad):
        raise OutOfDomain(f"{int(bad.sum())} point(s) outside the reference domain")


def homography(src, dst):
    """3x3 projective map sending the 4 ``src`` points onto ``dst``.

    Solves the 8x8 correspondence system with H[2, 2] = 1.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    M = np.zeros((8, 8))
    rhs = np.zeros(8)
    for r, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        M[2 * r] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        M[2 * r + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        rhs[2 * r] = u
        rhs[2 * r + 1] = v
    if np.linalg.matrix_rank(M) < 8:
        raise SingularMap("corner correspondences are rank deficient")
    h = np.linalg.solve(M, rhs)
    return np.append(h, 1.0).reshape(3, 3)


def build_map(zone: IrreducibleBZ, kind) -> DomainMap:
    kind = MapKind(kind)
    if kind is MapKind.AFFINE_TRIANGLE:
        v = zone.vertices
        H = np.array([[v[1, 0] - v[0, 0], v[2, 0] - v[0, 0], v[0, 0]],
                      [v[1, 1] - v[0, 1], v[2, 1] - v[0, 1], v[0, 1]],
                      [0.0, 0.0, 1.0]])
    else:
        H = homography(REFERENCE_SQUARE, zone.reflected_quad)
    det = np.linalg.det(H)
    if not np.isfinite(det) or abs(det) < 1e-300:
        raise SingularMap("homogeneous matrix is singular")
    return DomainMap(kind, H, np.linalg.inv(H))


def map_point(dmap: DomainMap, p):
    """Map a single reference point (or an (M, 2) array) into k-space."""
    out = dmap.forward(p)
    return out[0] if np.ndim(p) == 1 else out
