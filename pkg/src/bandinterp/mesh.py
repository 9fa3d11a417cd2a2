"""Fitted, periodic triangulations of a parallelogram unit cell.

The generator follows the force-equilibrium idea of distmesh (Persson &
Strang): free nodes are relaxed by repulsive bar forces derived from a
target edge-length field and the point set is re-Delaunay-triangulated as it
moves.  Periodicity and conformity are enforced structurally:

* nodes on two independent cell edges (plus the corner) are placed first and
  copied by lattice translation onto the opposite edges;
* nodes on every inclusion circle are fixed;
* free nodes keep a margin from every fixed boundary segment larger than
  half the segment length, so each segment is a Gabriel edge and is
  guaranteed to appear in the Delaunay triangulation;
* translated images of nodes near the cell boundary are triangulated with
  the real ones, so boundary nodes are never on the convex hull.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from .errors import GeometryError, MeshQualityFailure
from .lattice import Lattice, LatticeKind

BACKGROUND = 0
INCLUSION = 1

MESH_FORMAT_HEADER = "# bandinterp-mesh v1"

FSCALE = 1.2
DELTAT = 0.2
TTOL = 0.1
DPTOL = 1e-3
MAX_SWEEPS = 500
EDGE_FRACTION = 0.86
CIRCLE_SEGMENTS = 30  # minimum resolution of each inclusion boundary
MIN_ANGLE_DEG = 20.0
GABRIEL_MARGIN = 0.55


@dataclass(frozen=True)
class Inclusion:
    center: tuple
    radius: float


@dataclass(frozen=True)
class CellGeometry:
    lattice: Lattice
    inclusions: tuple = ()
    eps_inclusion: float = 8.9
    eps_background: float = 1.0

    def __post_init__(self):
        incl = tuple(i if isinstance(i, Inclusion) else Inclusion(tuple(map(float, i[0])), float(i[1]))
                     for i in self.inclusions)
        object.__setattr__(self, "inclusions", incl)
        for inc in incl:
            if not inc.radius > 0:
                raise GeometryError("inclusion radius must be positive")
        for eps in (self.eps_inclusion, self.eps_background):
            if eps < 1.0 - 1e-12:
                raise GeometryError(f"relative permittivity {eps} below 1")

    def epsilon(self, region):
        return np.where(np.asarray(region) == INCLUSION, self.eps_inclusion, self.eps_background)

    def canonical(self):
        """JSON-able canonical description (used for cache digests)."""
        return {
            "lattice": self.lattice.kind.value,
            "a1": [float(x) for x in self.lattice.a1],
            "a2": [float(x) for x in self.lattice.a2],
            "inclusions": [[list(map(float, i.center)), float(i.radius)] for i in self.inclusions],
            "eps_inclusion": float(self.eps_inclusion),
            "eps_background": float(self.eps_background),
        }

    def digest(self, **extra):
        payload = dict(self.canonical(), **extra)
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def square_geometry(radius=0.2, eps=8.9, eps_background=1.0):
    """Single circular rod at the center of the square cell."""
    return CellGeometry(Lattice.square(), (Inclusion((0.5, 0.5), radius),), eps, eps_background)


def hexagonal_geometry(eps=8.9, eps_background=1.0):
    """Six rods on the vertices of a hexagon of side R = a/3, radius R/3.

    The hexagon is centered in the rhombic cell with a vertex pointing along
    a1, which keeps every rod inside the cell.
    """
    lat = Lattice.hexagonal()
    R = 1.0 / 3.0
    center = 0.5 * (lat.a1 + lat.a2)
    incl = tuple(
        Inclusion((center[0] + R * np.cos(t), center[1] + R * np.sin(t)), R / 3.0)
        for t in np.arange(6) * np.pi / 3.0
    )
    return CellGeometry(lat, incl, eps, eps_background)


def empty_geometry(kind="square"):
    return CellGeometry(Lattice.from_kind(kind), (), 1.0, 1.0)


@dataclass(frozen=True)
class UnitCellMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    periodic_pairs: np.ndarray  # (P, 2) master, slave
    pair_shifts: np.ndarray  # (P, 2) integer (n1, n2): slave = master + n1 a1 + n2 a2
    h: float
    a1: np.ndarray = field(repr=False)
    a2: np.ndarray = field(repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def areas(self):
        return signed_areas(self.vertices, self.triangles)

    def dof_map(self):
        """Vertex -> DOF index after merging periodic slaves into masters."""
        owner = np.arange(self.n_vertices)
        for m, s in self.periodic_pairs:
            owner[s] = m
        # resolve chains (corner copies point at the corner master)
        for _ in range(3):
            owner = owner[owner]
        masters = np.unique(owner)
        renum = -np.ones(self.n_vertices, dtype=int)
        renum[masters] = np.arange(len(masters))
        return renum[owner]

    def min_angle(self):
        return float(np.degrees(triangle_angles(self.vertices, self.triangles).min()))


def dof_count(mesh: UnitCellMesh) -> int:
    return int(mesh.dof_map().max()) + 1


def signed_areas(p, t):
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))


def triangle_angles(p, t):
    P = p[t]
    angles = []
    for i in range(3):
        u = P[:, (i + 1) % 3] - P[:, i]
        v = P[:, (i + 2) % 3] - P[:, i]
        cosang = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return np.column_stack(angles)


# ---------------------------------------------------------------------------
# cell helpers


class _Cell:
    """Parallelogram {s1 a1 + s2 a2 : 0 <= s_i <= 1}."""

    def __init__(self, a1, a2):
        self.a1 = np.asarray(a1, float)
        self.a2 = np.asarray(a2, float)
        self.A = np.column_stack([self.a1, self.a2])
        self.Ainv = np.linalg.inv(self.A)
        # edge lines: s1 = 0, s1 = 1, s2 = 0, s2 = 1; distance = |s - c| * height
        self.height1 = abs(np.linalg.det(self.A)) / np.linalg.norm(self.a2)  # across s1
        self.height2 = abs(np.linalg.det(self.A)) / np.linalg.norm(self.a1)  # across s2
        self.diameter = max(np.linalg.norm(self.a1 + self.a2), np.linalg.norm(self.a1 - self.a2))

    def frac(self, p):
        return p @ self.Ainv.T

    def cart(self, s):
        return s @ self.A.T

    def edge_distances(self, p):
        s = self.frac(p)
        return np.column_stack([s[:, 0] * self.height1, (1 - s[:, 0]) * self.height1,
                                s[:, 1] * self.height2, (1 - s[:, 1]) * self.height2])

    def inside(self, p, tol=0.0):
        return np.all(self.edge_distances(p) > tol, axis=1)


def _validate(geom: CellGeometry, h: float, cell: _Cell):
    if not h > 0:
        raise GeometryError("mesh size h must be positive")
    shortest = min(np.linalg.norm(cell.a1), np.linalg.norm(cell.a2))
    rmin = min((i.radius for i in geom.inclusions), default=np.inf)
    if h > shortest / 2.0 or h > rmin:
        raise GeometryError(
            f"h={h} violates h <= min(shortest cell edge / 2, min radius) = {min(shortest / 2, rmin)}")
    centers = np.array([i.center for i in geom.inclusions]).reshape(-1, 2)
    radii = np.array([i.radius for i in geom.inclusions])
    if len(radii):
        d = cell.edge_distances(centers)
        if np.any(d.min(axis=1) <= radii):
            raise GeometryError("inclusions must lie strictly inside the cell")
        for i in range(len(radii)):
            for j in range(i + 1, len(radii)):
                if np.linalg.norm(centers[i] - centers[j]) <= radii[i] + radii[j]:
                    raise GeometryError("inclusions overlap")
    return centers, radii


def _clearance(cell, centers, radii):
    """Smallest gap between an inclusion and another inclusion or the cell edge."""
    if not len(radii):
        return np.inf
    gaps = [np.min(cell.edge_distances(centers), axis=1) - radii]
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            gaps.append([np.linalg.norm(centers[i] - centers[j]) - radii[i] - radii[j]])
    return float(min(np.min(g) for g in gaps))


class _SizeField:
    """Target edge length: h away from inclusions, graded towards a finer
    interface size h_i where the inclusion is small or close to something else."""

    grading = 0.05

    def __init__(self, h, centers, radii, clearance):
        self.h = h
        self.centers = centers
        self.radii = radii
        rmin = np.min(radii) if len(radii) else np.inf
        self.h_iface = min(h, 0.8 * clearance, 2 * np.pi * rmin / CIRCLE_SEGMENTS)

    def __call__(self, p):
        p = np.atleast_2d(p)
        if not len(self.radii) or self.h_iface >= self.h:
            return np.full(len(p), self.h)
        rho = np.linalg.norm(p[:, None, :] - self.centers[None, :, :], axis=2)
        d = np.min(np.abs(rho - self.radii[None, :]), axis=1)
        return np.minimum(self.h, self.h_iface + self.grading * d)


def _edge_params(fh, origin, direction, opposite_shift, n_samples=2001):
    """Node parameters in [0, 1] along a cell edge with spacing following
    fh (taken as the minimum of the edge and its periodic copy)."""
    s = np.linspace(0.0, 1.0, n_samples)
    pts = origin + s[:, None] * direction
    hs = np.minimum(fh(pts), fh(pts + opposite_shift))
    L = np.linalg.norm(direction)
    density = L / hs
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(s))])
    n = max(1, int(np.ceil(cum[-1] - 1e-9)))
    targets = np.linspace(0.0, cum[-1], n + 1)
    params = np.interp(targets, cum, s)
    params[0], params[-1] = 0.0, 1.0
    return params


def _structured(cell, n1, n2, h):
    s1 = np.linspace(0, 1, n1 + 1)
    s2 = np.linspace(0, 1, n2 + 1)
    S1, S2 = np.meshgrid(s1, s2, indexing="ij")
    idx = np.arange((n1 + 1) * (n2 + 1)).reshape(n1 + 1, n2 + 1)
    p = cell.cart(np.column_stack([S1.ravel(), S2.ravel()]))
    tris = []
    for i in range(n1):
        for j in range(n2):
            v00, v10, v01, v11 = idx[i, j], idx[i + 1, j], idx[i, j + 1], idx[i + 1, j + 1]
            tris += [(v00, v10, v11), (v00, v11, v01)]
    t = np.array(tris)
    pairs, shifts = [], []
    for j in range(n2 + 1):
        pairs.append((idx[0, j], idx[n1, j]))
        shifts.append((1, 0))
    for i in range(n1 + 1):
        pairs.append((idx[i, 0], idx[i, n2]))
        shifts.append((0, 1))
    pairs, shifts = _canonical_pairs(np.array(pairs), np.array(shifts), idx[0, 0], idx[n1, 0], idx[0, n2], idx[n1, n2])
    return p, t, pairs, shifts


def _canonical_pairs(pairs, shifts, c00, c10, c01, c11):
    """Point every corner copy directly at the origin corner."""
    keep = [(m, s, tuple(d)) for (m, s), d in zip(pairs, shifts) if s not in (c10, c01, c11)]
    keep += [(c00, c10, (1, 0)), (c00, c01, (0, 1)), (c00, c11, (1, 1))]
    keep = list(dict.fromkeys(keep))
    return np.array([(m, s) for m, s, _ in keep]), np.array([d for _, _, d in keep])


def generate_mesh(geom: CellGeometry, h: float, seed: int = 0, max_sweeps: int = MAX_SWEEPS) -> UnitCellMesh:
    """Fitted periodic triangulation of the unit cell of ``geom``."""
    cell = _Cell(geom.lattice.a1, geom.lattice.a2)
    centers, radii = _validate(geom, h, cell)

    if not len(radii):
        n1 = max(1, int(np.ceil(np.linalg.norm(cell.a1) / h - 1e-9)))
        n2 = max(1, int(np.ceil(np.linalg.norm(cell.a2) / h - 1e-9)))
        if max(n1, n2) <= 2:
            p, t, pairs, shifts = _structured(cell, n1, n2, h)
            return _finish(geom, cell, p, t, pairs, shifts, h, centers, radii)

    # h bounds the edge length; relaxed meshes overshoot the target by ~15-25%
    fh = _SizeField(EDGE_FRACTION * h, centers, radii, _clearance(cell, centers, radii))
    rng = np.random.default_rng(seed)

    # --- fixed nodes: corners + two independent edges and their copies
    t1 = _edge_params(fh, np.zeros(2), cell.a1, cell.a2)
    t2 = _edge_params(fh, np.zeros(2), cell.a2, cell.a1)
    fixed = [np.zeros(2), cell.a1.copy(), cell.a2.copy(), cell.a1 + cell.a2]
    c00, c10, c01, c11 = 0, 1, 2, 3
    pairs, shifts = [], []
    for t in t1[1:-1]:  # edge s2 = 0 along a1, copy to s2 = 1
        fixed.append(t * cell.a1)
        fixed.append(t * cell.a1 + cell.a2)
        pairs.append((len(fixed) - 2, len(fixed) - 1))
        shifts.append((0, 1))
    for t in t2[1:-1]:  # edge s1 = 0 along a2, copy to s1 = 1
        fixed.append(t * cell.a2)
        fixed.append(t * cell.a2 + cell.a1)
        pairs.append((len(fixed) - 2, len(fixed) - 1))
        shifts.append((1, 0))
    pairs, shifts = _canonical_pairs(np.array(pairs).reshape(-1, 2), np.array(shifts).reshape(-1, 2),
                                     c00, c10, c01, c11)
    edge_margin = _EdgeMargin(t1, t2, cell)

    r_in, r_out = [], []
    for c, r in zip(centers, radii):
        nc = max(8, int(np.ceil(2 * np.pi * r / fh(c + np.array([r, 0.0]))[0])))
        ang = 2 * np.pi * np.arange(nc) / nc
        for a in ang:
            fixed.append(c + r * np.array([np.cos(a), np.sin(a)]))
        chord = 2 * r * np.sin(np.pi / nc)
        mid = r * np.cos(np.pi / nc)
        r_in.append(mid - GABRIEL_MARGIN * chord)
        r_out.append(mid + GABRIEL_MARGIN * chord)
    r_in, r_out = np.array(r_in), np.array(r_out)
    fixed = np.array(fixed)
    nfix = len(fixed)

    # --- initial free nodes: equilateral grid at the finest size, rejection-thinned
    hmin = float(np.min(fh(np.vstack([fixed, cell.cart(rng.random((2000, 2)))]))))
    lo = np.min(cell.cart(np.array([[0, 0], [1, 0], [0, 1], [1, 1]])), axis=0)
    hi = np.max(cell.cart(np.array([[0, 0], [1, 0], [0, 1], [1, 1]])), axis=0)
    xs = np.arange(lo[0], hi[0] + hmin, hmin)
    ys = np.arange(lo[1], hi[1] + hmin, hmin * np.sqrt(3) / 2)
    X, Y = np.meshgrid(xs, ys)
    X[1::2, :] += hmin / 2
    cand = np.column_stack([X.ravel(), Y.ravel()])
    cand = cand[cell.inside(cand)]
    keep = rng.random(len(cand)) < (hmin / fh(cand)) ** 2
    cand = cand[keep]
    region = np.full(len(cand), -1)
    if len(radii):
        rho = np.linalg.norm(cand[:, None, :] - centers[None], axis=2)
        inside_any = rho < radii[None, :]
        region = np.where(inside_any.any(axis=1), inside_any.argmax(axis=1), -1)
    free = cand
    free = _project(free, region, cell, centers, r_in, r_out, edge_margin)
    free, region = _drop_crowded(free, region, fixed, fh)

    p = np.vstack([fixed, free])
    region_all = np.concatenate([np.full(nfix, -2), region])

    # --- relaxation
    p_last = np.full_like(p, np.inf)
    tri = ghost_src = None
    for sweep in range(max_sweeps):
        if tri is None or np.max(np.linalg.norm(p - p_last, axis=1)) > TTOL * hmin:
            p_last = p.copy()
            tri, ghost_src, ghost_shift = _triangulate(p, cell, h)
            bars = _bars(tri)
        P = np.vstack([p, p[ghost_src] + ghost_shift])
        owner = np.concatenate([np.arange(len(p)), ghost_src])
        barvec = P[bars[:, 0]] - P[bars[:, 1]]
        L = np.linalg.norm(barvec, axis=1)
        hbars = fh(0.5 * (P[bars[:, 0]] + P[bars[:, 1]]))
        L0 = hbars * FSCALE * np.sqrt(np.sum(L ** 2) / np.sum(hbars ** 2))
        F = np.maximum(L0 - L, 0.0)
        Fvec = (F / L)[:, None] * barvec
        Ftot = np.zeros_like(p)
        np.add.at(Ftot, owner[bars[:, 0]], Fvec)
        np.add.at(Ftot, owner[bars[:, 1]], -Fvec)
        Ftot[:nfix] = 0.0
        p_new = p + DELTAT * Ftot
        p_new[nfix:] = _project(p_new[nfix:], region, cell, centers, r_in, r_out, edge_margin)
        move = np.max(np.linalg.norm(p_new[nfix:] - p[nfix:], axis=1)) if len(p) > nfix else 0.0
        p = p_new
        if move < DPTOL * hmin:
            break

    # Past the sweep cap the nodes only jitter; quality decides acceptance.
    tri, ghost_src, _ = _triangulate(p, cell, h)
    if np.any(tri >= len(p)):
        raise MeshQualityFailure("final triangulation uses periodic images; boundary not conforming")
    mesh = _finish(geom, cell, p, tri, pairs, shifts, h, centers, radii)
    if mesh.min_angle() < MIN_ANGLE_DEG:
        raise MeshQualityFailure(f"minimum angle {mesh.min_angle():.2f} deg below {MIN_ANGLE_DEG}")
    return mesh


class _EdgeMargin:
    """Distance free nodes keep from the cell edges, in fractional units.

    Uses the length of the boundary segments next to the node's projection
    so that every segment stays a Gabriel edge.
    """

    def __init__(self, t1, t2, cell):
        self.t1, self.t2 = t1, t2
        self.seg1 = np.diff(t1) * np.linalg.norm(cell.a1)  # along a1 (edges s2 = 0, 1)
        self.seg2 = np.diff(t2) * np.linalg.norm(cell.a2)  # along a2 (edges s1 = 0, 1)
        self.h1, self.h2 = cell.height1, cell.height2

    @staticmethod
    def _local(t, seg, x):
        i = np.clip(np.searchsorted(t, x) - 1, 0, len(seg) - 1)
        lo = seg[np.clip(i - 1, 0, len(seg) - 1)]
        hi = seg[np.clip(i + 1, 0, len(seg) - 1)]
        return np.maximum(seg[i], np.maximum(lo, hi))

    def __call__(self, s):
        # margin from edges s1 = const depends on position along a2 (s2), and vice versa
        m1 = GABRIEL_MARGIN * self._local(self.t2, self.seg2, np.clip(s[:, 1], 0, 1)) / self.h1
        m2 = GABRIEL_MARGIN * self._local(self.t1, self.seg1, np.clip(s[:, 0], 0, 1)) / self.h2
        return m1, m2


def _drop_crowded(free, region, fixed, fh):
    """Remove free nodes closer than half the local size to a fixed node."""
    if not len(free):
        return free, region
    from scipy.spatial import cKDTree

    d, _ = cKDTree(fixed).query(free)
    keep = d > 0.5 * fh(free)
    return free[keep], region[keep]


def _project(q, region, cell, centers, r_in, r_out, edge_margin):
    q = q.copy()
    for _ in range(2):
        for j in range(len(centers)):
            v = q - centers[j]
            rho = np.linalg.norm(v, axis=1)
            rho_safe = np.where(rho > 0, rho, 1.0)
            mine = region == j
            out = mine & (rho > r_in[j])
            q[out] = centers[j] + v[out] / rho_safe[out, None] * r_in[j]
            bg = (region == -1) & (rho < r_out[j])
            q[bg] = centers[j] + v[bg] / rho_safe[bg, None] * r_out[j]
        s = cell.frac(q)
        m1, m2 = edge_margin(s)
        s[:, 0] = np.clip(s[:, 0], m1, 1 - m1)
        s[:, 1] = np.clip(s[:, 1], m2, 1 - m2)
        q = cell.cart(s)
    return q


def _triangulate(p, cell, h):
    """Delaunay of nodes plus periodic images near the cell; returns the
    triangles whose centroid lies inside the cell, in extended indexing."""
    shifts = [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)]
    band = 3.0 * h
    ghosts, src, gshift = [], [], []
    for i, j in shifts:
        off = i * cell.a1 + j * cell.a2
        q = p + off
        d = cell.edge_distances(q)
        outside = np.any(d < -1e-12 * cell.diameter, axis=1)
        near = np.all(d > -band, axis=1)
        sel = outside & near
        ghosts.append(q[sel])
        src.append(np.nonzero(sel)[0])
        gshift.append(np.repeat(off[None, :], sel.sum(), axis=0))
    G = np.vstack(ghosts)
    ghost_src = np.concatenate(src)
    ghost_shift = np.vstack(gshift)
    P = np.vstack([p, G])
    t = Delaunay(P).simplices
    cent = P[t].mean(axis=1)
    t = t[cell.inside(cent, tol=1e-12 * cell.diameter)]
    ar = signed_areas(P, t)
    t = t[np.abs(ar) > 1e-14 * h * h]
    ar = signed_areas(P, t)
    t[ar < 0] = t[ar < 0][:, [0, 2, 1]]
    return t, ghost_src, ghost_shift


def _bars(t):
    b = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    b.sort(axis=1)
    return np.unique(b, axis=0)


def _finish(geom, cell, p, t, pairs, shifts, h, centers, radii):
    # drop unused vertices (none expected) and renumber
    used = np.zeros(len(p), dtype=bool)
    used[t.ravel()] = True
    if not used.all():
        renum = -np.ones(len(p), dtype=int)
        renum[used] = np.arange(used.sum())
        t = renum[t]
        keep = used[pairs[:, 0]] & used[pairs[:, 1]]
        pairs = renum[pairs[keep]]
        shifts = shifts[keep]
        p = p[used]
    ar = signed_areas(p, t)
    t = t.copy()
    t[ar < 0] = t[ar < 0][:, [0, 2, 1]]
    cent = p[t].mean(axis=1)
    region = np.full(len(t), BACKGROUND, dtype=np.int8)
    if len(radii):
        rho = np.linalg.norm(cent[:, None, :] - centers[None], axis=2)
        region[np.any(rho < radii[None, :], axis=1)] = INCLUSION
    return UnitCellMesh(p, t.astype(np.int64), region, pairs.astype(np.int64), shifts.astype(np.int64),
                        float(h), cell.a1.copy(), cell.a2.copy())


# ---------------------------------------------------------------------------
# invariant checks (used by tests and by the CLI's ``mesh`` subcommand)


def check_mesh(mesh: UnitCellMesh, geom: CellGeometry, tol=1e-10):
    """Return a dict of named invariant results (True = holds)."""
    p, t = mesh.vertices, mesh.triangles
    res = {}
    ar = mesh.areas()
    res["positive_area"] = bool(np.all(ar > 0))
    res["area_sum"] = bool(abs(ar.sum() - geom.lattice.cell_area) <= tol * geom.lattice.cell_area)
    res["min_angle"] = mesh.min_angle() >= MIN_ANGLE_DEG

    ok = True
    cent = p[t].mean(axis=1)
    labels_ok = True
    for inc in geom.inclusions:
        c = np.asarray(inc.center)
        rho = np.linalg.norm(p - c, axis=1)
        on = np.abs(rho - inc.radius) <= 1e-8 * mesh.h
        side = np.where(on, 0, np.sign(rho - inc.radius))
        s = side[t]
        straddle = np.any(s > 0, axis=1) & np.any(s < 0, axis=1)
        ok &= not straddle.any()
    res["no_straddle"] = bool(ok)
    inside = np.zeros(len(t), dtype=bool)
    for inc in geom.inclusions:
        inside |= np.linalg.norm(cent - np.asarray(inc.center), axis=1) < inc.radius
    labels_ok = np.array_equal(inside, mesh.region == INCLUSION)
    res["region_labels"] = bool(labels_ok)

    # periodic pairing: translation exact, bijection between boundary sets
    A = np.column_stack([mesh.a1, mesh.a2])
    m, s = mesh.periodic_pairs[:, 0], mesh.periodic_pairs[:, 1]
    diff = p[s] - p[m] - mesh.pair_shifts @ A.T
    res["pair_translation"] = bool(np.all(np.linalg.norm(diff, axis=1) <= 1e-8 * mesh.h))
    res["pair_bijection"] = len(np.unique(s)) == len(s) and not (set(s) & set(m))

    # edge incidence
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    res["edge_incidence"] = bool(np.all((counts == 1) | (counts == 2)))
    bnd = uniq[counts == 1]
    cell = _Cell(mesh.a1, mesh.a2)
    d = cell.edge_distances(p)
    on_bnd = np.any(np.abs(d) <= 1e-9, axis=1)
    res["boundary_edges_on_cell_boundary"] = bool(np.all(on_bnd[bnd]))
    # each boundary edge has a partner on the opposite side under the periodic map
    mid = cell.frac(0.5 * (p[bnd[:, 0]] + p[bnd[:, 1]]))
    key = np.round(np.mod(mid, 1.0) * 1e9).astype(np.int64) % 1_000_000_000
    _, bc = np.unique(key, axis=0, return_counts=True)
    res["boundary_edges_pair_up"] = bool(np.all(bc == 2))
    return res


# ---------------------------------------------------------------------------
# text I/O


def write_mesh(mesh: UnitCellMesh, path):
    buf = io.StringIO()
    buf.write(MESH_FORMAT_HEADER + "\n")
    buf.write(f"h {mesh.h!r}\n")
    buf.write("a1 {!r} {!r}\n".format(*map(float, mesh.a1)))
    buf.write("a2 {!r} {!r}\n".format(*map(float, mesh.a2)))
    buf.write(f"vertices {len(mesh.vertices)}\n")
    for x, y in mesh.vertices:
        buf.write(f"{x:.17g} {y:.17g}\n")
    buf.write(f"triangles {len(mesh.triangles)}\n")
    for (i, j, k), r in zip(mesh.triangles, mesh.region):
        buf.write(f"{i} {j} {k} {int(r)}\n")
    buf.write(f"periodic {len(mesh.periodic_pairs)}\n")
    for (m, s), (n1, n2) in zip(mesh.periodic_pairs, mesh.pair_shifts):
        buf.write(f"{m} {s} {n1} {n2}\n")
    Path(path).write_text(buf.getvalue())


def read_mesh(path) -> UnitCellMesh:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != MESH_FORMAT_HEADER:
        raise ValueError(f"{path}: not a bandinterp mesh file")
    it = iter(lines[1:])

    def kv(name):
        parts = next(it).split()
        if parts[0] != name:
            raise ValueError(f"expected '{name}', got '{parts[0]}'")
        return parts[1:]

    h = float(kv("h")[0])
    a1 = np.array(list(map(float, kv("a1"))))
    a2 = np.array(list(map(float, kv("a2"))))
    nv = int(kv("vertices")[0])
    V = np.array([list(map(float, next(it).split())) for _ in range(nv)]).reshape(nv, 2)
    nt = int(kv("triangles")[0])
    T = np.array([list(map(int, next(it).split())) for _ in range(nt)]).reshape(nt, 4)
    npr = int(kv("periodic")[0])
    Pp = np.array([list(map(int, next(it).split())) for _ in range(npr)]).reshape(npr, 4)
    return UnitCellMesh(V, T[:, :3].astype(np.int64), T[:, 3].astype(np.int8), Pp[:, :2].astype(np.int64),
                        Pp[:, 2:].astype(np.int64), h, a1, a2)


DEFAULT_H = {LatticeKind.SQUARE: 0.025, LatticeKind.HEXAGONAL: 0.05}
