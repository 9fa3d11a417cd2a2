"""Sample band functions at mapped interpolation nodes, interpolate over the
IBZ, score against a direct reference grid, and search for extrema."""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cache import EigenCache, cache_key
from .errors import FoldFailure, ValidationError
from .fem import RESIDUAL_TOL, Mode, ModeCoefficients, assemble, solve_bands
from .interp import Domain, Interpolant, build_interpolant
from .lattice import IrreducibleBZ, LatticeKind, MapKind, build_map, ibz
from .mesh import DEFAULT_H, CellGeometry, generate_mesh
from .nodes import NodeKind, NodeSet, node_set, triangle_grid

REFERENCE_DEGREE = 21
MESHER_VERSION = 2
FOLD_TOL = 1e-9


@dataclass(frozen=True)
class ReconstructionConfig:
    geometry: CellGeometry
    mode: Mode = Mode.TM
    kind: NodeKind = NodeKind.IMPROVED_LOBATTO
    degree: int = 8
    bands: int = 6
    h: float | None = None
    reference_degree: int = REFERENCE_DEGREE
    tol: float = RESIDUAL_TOL
    solver_method: str = "auto"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        object.__setattr__(self, "kind", NodeKind(self.kind))
        if self.h is None:
            object.__setattr__(self, "h", DEFAULT_H[self.geometry.lattice.kind])
        bad = []
        if self.bands < 1:
            bad.append(("bands", "must be >= 1"))
        if self.degree < 1:
            bad.append(("nodes.degree", "must be >= 1"))
        if not self.h > 0:
            bad.append(("mesh.h", "must be > 0"))
        if self.reference_degree < 1:
            bad.append(("reference.degree", "must be >= 1"))
        if self.jobs < 1:
            bad.append(("jobs", "must be >= 1"))
        if bad:
            raise ValidationError(bad)

    @property
    def zone(self) -> IrreducibleBZ:
        return ibz(self.geometry.lattice)

    def with_(self, **kw):
        from dataclasses import replace

        return replace(self, **kw)


class BandSolver:
    """Mesh + assembled Bloch system for one geometry/mode/h, with a memo and
    an optional persistent cache.  Safe to share across threads."""

    def __init__(self, geometry: CellGeometry, mode, h, bands, *, seed=0, tol=RESIDUAL_TOL,
                 method="auto", cache: EigenCache | None = None, jobs=1):
        self.geometry = geometry
        self.mode = Mode.parse(mode)
        self.h = float(h)
        self.bands = int(bands)
        self.tol = tol
        self.method = method
        self.jobs = int(jobs)
        self.mesh = generate_mesh(geometry, self.h, seed=seed)
        self.system = assemble(self.mesh, ModeCoefficients.from_geometry(geometry, self.mode))
        self.digest = geometry.digest(h=self.h, seed=seed, mesher=MESHER_VERSION)
        self.cache = cache if cache is not None else EigenCache()
        self.n_solves = 0
        self._lock = threading.Lock()

    @classmethod
    def from_config(cls, cfg: ReconstructionConfig, cache=None):
        return cls(cfg.geometry, cfg.mode, cfg.h, cfg.bands, seed=cfg.seed, tol=cfg.tol,
                   method=cfg.solver_method, cache=cache, jobs=cfg.jobs)

    def key(self, k):
        return cache_key(self.digest, self.mode.value, self.h, k, self.bands)

    def _solve_one(self, k):
        return solve_bands(self.system, k, self.bands, method=self.method, tol=self.tol).lambdas

    def lambdas(self, ks):
        """(M, bands) eigenvalues at the k-points ``ks``; each distinct key is solved once."""
        ks = np.atleast_2d(np.asarray(ks, dtype=float))
        keys = [self.key(k) for k in ks]
        todo = {}
        for key, k in zip(keys, ks):
            if key not in todo and self.cache.get(key) is None:
                todo[key] = k
        if todo:
            items = list(todo.items())
            if self.jobs > 1 and len(items) > 1:
                with ThreadPoolExecutor(self.jobs) as pool:
                    results = list(pool.map(lambda kv: self._solve_one(kv[1]), items))
            else:
                results = [self._solve_one(k) for _, k in items]
            self.cache.put_many([(key, lam, None) for (key, _), lam in zip(items, results)])
            with self._lock:
                self.n_solves += len(items)
        return np.array([self.cache.get(key)[0] for key in keys])

    def freqs(self, ks):
        return np.sqrt(np.clip(self.lambdas(ks), 0.0, None)) / (2.0 * np.pi)


def reference_grid(zone: IrreducibleBZ, degree: int = REFERENCE_DEGREE):
    """Uniform barycentric grid of the given degree on the IBZ triangle."""
    ref = triangle_grid(degree)
    return build_map(zone, MapKind.AFFINE_TRIANGLE).forward(ref)


def _node_map(cfg: ReconstructionConfig):
    kind = MapKind.AFFINE_TRIANGLE if cfg.kind.domain is Domain.TRIANGLE else MapKind.PROJECTIVE_QUAD
    return build_map(cfg.zone, kind)


def fold_square_nodes(points, dmap, zone: IrreducibleBZ):
    """For quad nodes (s, t) pick the representative of {(s, t), (t, s)} whose
    image lies in the IBZ; the diagonal swap is the k-space mirror."""
    pts = np.atleast_2d(points)
    k_direct = dmap.forward(pts)
    k_swap = dmap.forward(pts[:, ::-1])
    in_direct = zone.contains(k_direct, FOLD_TOL)
    in_swap = zone.contains(k_swap, FOLD_TOL)
    if not np.all(in_direct | in_swap):
        raise FoldFailure("quad node maps outside the IBZ and its mirror")
    return np.where(in_direct[:, None], k_direct, k_swap)


@dataclass
class SampleSet:
    nodes: NodeSet
    k: np.ndarray          # k-point actually solved for each node (after folding)
    freqs: np.ndarray      # (N, m)
    n_distinct: int
    n_new_solves: int


def sample_bands(cfg: ReconstructionConfig, solver: BandSolver | None = None, nodes: NodeSet | None = None) -> SampleSet:
    solver = solver or BandSolver.from_config(cfg)
    nodes = nodes or node_set(cfg.kind, cfg.degree)
    dmap = _node_map(cfg)
    if nodes.domain is Domain.TRIANGLE:
        ks = dmap.forward(nodes.points)
    else:
        ks = fold_square_nodes(nodes.points, dmap, cfg.zone)
    before = solver.n_solves
    f = solver.freqs(ks)
    distinct = len({solver.key(k) for k in ks})
    return SampleSet(nodes, ks, f, distinct, solver.n_solves - before)


@dataclass
class Reconstruction:
    config: ReconstructionConfig
    samples: SampleSet
    interpolant: Interpolant
    dmap: object

    def reference_coords(self, ks):
        """Reference-domain coordinates of IBZ points, clipped against roundoff."""
        p = self.dmap.inverse(np.atleast_2d(ks))
        if self.interpolant.basis.domain is Domain.SQUARE:
            return np.clip(p, -1.0, 1.0)
        p = np.clip(p, 0.0, 1.0)
        s = p.sum(axis=1)
        p[s > 1.0] /= s[s > 1.0, None]
        return p

    def values(self, ks):
        """(M, m) interpolated frequencies at IBZ points."""
        return self.interpolant.values(self.reference_coords(ks))


def reconstruct(cfg: ReconstructionConfig, solver: BandSolver | None = None, nodes: NodeSet | None = None) -> Reconstruction:
    solver = solver or BandSolver.from_config(cfg)
    s = sample_bands(cfg, solver, nodes)
    interp = build_interpolant(s.nodes, s.freqs.T)
    return Reconstruction(cfg, s, interp, _node_map(cfg))


@dataclass
class ErrorReport:
    errors: np.ndarray        # (m, M) relative errors, NaN where excluded
    error_inf: float
    error_avg: float
    band_max: np.ndarray
    band_argmax: np.ndarray   # (m, 2) k-points
    reference_k: np.ndarray
    n_nodes: int
    n_solves: int             # distinct eigen-solves needed by the sampling
    runtime: float
    kind: str = ""
    degree: int = 0
    extra: dict = field(default_factory=dict)


def score(reference_k, exact, approx):
    """Relative errors |w - Lw| / w with band 1 at Gamma excluded."""
    exact = np.asarray(exact, dtype=float)
    approx = np.asarray(approx, dtype=float)
    err = np.abs(exact - approx)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = err / exact
    gamma = np.linalg.norm(reference_k, axis=1) < 1e-12
    rel[gamma, 0] = np.nan
    rel = rel.T  # (m, M)
    error_inf = float(np.nanmax(rel))
    # points with every band excluded (Gamma when m = 1) do not enter the mean
    defined = ~np.all(np.isnan(rel), axis=0)
    error_avg = float(np.mean(np.nanmean(rel[:, defined], axis=0)))
    idx = np.nanargmax(rel, axis=1)
    return rel, error_inf, error_avg, np.nanmax(rel, axis=1), reference_k[idx]


def reconstruct_and_score(cfg: ReconstructionConfig, solver: BandSolver | None = None,
                          nodes: NodeSet | None = None) -> ErrorReport:
    t0 = time.perf_counter()
    solver = solver or BandSolver.from_config(cfg)
    rec = reconstruct(cfg, solver, nodes)
    kref = reference_grid(cfg.zone, cfg.reference_degree)
    exact = solver.freqs(kref)
    approx = rec.values(kref)
    rel, einf, eavg, bmax, barg = score(kref, exact, approx)
    return ErrorReport(rel, einf, eavg, bmax, barg, kref, len(rec.samples.nodes), rec.samples.n_distinct,
                       time.perf_counter() - t0, cfg.kind.value, cfg.degree)


@dataclass
class ExtremaResult:
    band: int
    location: np.ndarray
    value: float
    boundary_location: np.ndarray
    boundary_value: float
    interior: bool
    sense: str = "max"


def _edge_distance(zone, k):
    v = zone.vertices
    out = np.inf
    for i in range(3):
        a, b = v[i], v[(i + 1) % 3]
        t = np.clip(np.dot(k - a, b - a) / np.dot(b - a, b - a), 0.0, 1.0)
        out = min(out, float(np.linalg.norm(k - (a + t * (b - a)))))
    return out


def _refine_quadratic(f, zone, center, step):
    """One Newton step on a least-squares quadratic fit over a 3x3 stencil."""
    offs = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)
    pts = center + step * offs
    ok = zone.contains(pts, 1e-12)
    if ok.sum() < 6:
        return center
    x, y = offs[ok, 0], offs[ok, 1]
    A = np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y])
    c, *_ = np.linalg.lstsq(A, f(pts[ok]), rcond=None)
    H = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
    g = c[1:3]
    try:
        d = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return center
    d = np.clip(d, -1.0, 1.0)
    return center + step * d


def _scan_max(f, pts):
    v = f(pts)
    i = int(np.argmax(v))
    return pts[i], float(v[i])


def find_extrema(rec: Reconstruction, band: int, density: int = 300, sense: str = "max") -> ExtremaResult:
    """Domain and boundary extremum of one interpolated band over the IBZ."""
    zone = rec.config.zone
    sign = 1.0 if sense == "max" else -1.0

    def f(ks):
        return sign * rec.values(np.atleast_2d(ks))[:, band]

    lam = triangle_grid(density)
    v = zone.vertices
    grid = v[0] + lam[:, :1] * (v[1] - v[0]) + lam[:, 1:] * (v[2] - v[0])
    k_best, f_best = _scan_max(f, grid)

    # boundary: dense 1D scans of the three edges with parabolic refinement
    t = np.linspace(0.0, 1.0, 10 * density + 1)
    kb, fb = None, -np.inf
    for i in range(3):
        a, b = v[i], v[(i + 1) % 3]
        pts = a + t[:, None] * (b - a)
        vals = f(pts)
        j = int(np.argmax(vals))
        kj, fj = pts[j], vals[j]
        if 0 < j < len(t) - 1:
            y0, y1, y2 = vals[j - 1], vals[j], vals[j + 1]
            den = y0 - 2 * y1 + y2
            if den < 0:
                s = 0.5 * (y0 - y2) / den
                kr = a + (t[j] + s * (t[1] - t[0])) * (b - a)
                fr = float(f(kr)[0])
                if fr > fj:
                    kj, fj = kr, fr
        if fj > fb:
            kb, fb = kj, fj

    step = np.linalg.norm(v[1] - v[0]) / density
    for _ in range(3):
        k_new = _refine_quadratic(f, zone, k_best, step)
        if not zone.contains(k_new, 1e-12)[0]:
            break
        f_new = float(f(k_new)[0])
        if f_new <= f_best:
            break
        k_best, f_best = k_new, f_new
        step *= 0.5
    if fb > f_best:
        k_best, f_best = kb, fb
    interior = _edge_distance(zone, k_best) > 1e-3 and f_best > fb
    return ExtremaResult(band, np.asarray(k_best), sign * f_best, np.asarray(kb), sign * fb, bool(interior), sense)


def convergence_study(cfg: ReconstructionConfig, degrees, kinds=None, solver: BandSolver | None = None):
    """Rows (kind, n, solves, error_inf, error_avg) sharing one mesh and reference grid."""
    degrees = list(degrees)
    if any(b < a for a, b in zip(degrees, degrees[1:])):
        raise ValueError("degrees must be ascending")
    solver = solver or BandSolver.from_config(cfg)
    kinds = [NodeKind(k) for k in (kinds or [cfg.kind])]
    rows = []
    for kind in kinds:
        for n in degrees:
            rep = reconstruct_and_score(cfg.with_(kind=kind, degree=n), solver)
            rows.append((kind.value, n, rep.n_solves, rep.error_inf, rep.error_avg))
    return rows


def point_group(kind):
    """2x2 orthogonal matrices of the lattice point group (C4v or C6v)."""
    order = 4 if LatticeKind(kind) is LatticeKind.SQUARE else 6
    ops = []
    for j in range(order):
        a = 2 * np.pi * j / order
        R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        ops.append(R)
        ops.append(R @ np.diag([1.0, -1.0]))
    return ops


def fold_to_ibz(lattice, zone: IrreducibleBZ, ks, tol=FOLD_TOL):
    """Map arbitrary k-points into the IBZ by reciprocal translations and point-group operations."""
    ks = np.atleast_2d(np.asarray(ks, dtype=float))
    B = np.vstack([lattice.b1, lattice.b2])
    shifts = np.array([(i, j) for i in range(-2, 3) for j in range(-2, 3)]) @ B
    ops = point_group(lattice.kind)
    out = np.empty_like(ks)
    for n, k in enumerate(ks):
        # nearest reciprocal lattice vector brings k into the first zone
        cand = k - shifts
        k0 = cand[np.argmin(np.linalg.norm(cand, axis=1))]
        for R in ops:
            q = R @ k0
            if zone.contains(q, tol)[0]:
                out[n] = q
                break
        else:
            raise FoldFailure(f"cannot fold k={k.tolist()} into the IBZ")
    return out


def unfold_to_bz(rec: Reconstruction, band: int, ks):
    """Interpolated band values at arbitrary k, folded into the IBZ first."""
    lat = rec.config.geometry.lattice
    q = fold_to_ibz(lat, rec.config.zone, ks)
    return rec.values(q)[:, band]


def band_path(zone: IrreducibleBZ, per_segment: int = 100):
    """Polyline Gamma -> X/K -> M -> Gamma with cumulative arc length."""
    v = zone.vertices
    legs = [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])]
    pts, s, total = [], [], 0.0
    for i, (a, b) in enumerate(legs):
        t = np.linspace(0.0, 1.0, per_segment + 1)
        if i > 0:
            t = t[1:]
        seg = a + t[:, None] * (b - a)
        pts.append(seg)
        s.append(total + t * np.linalg.norm(b - a))
        total += np.linalg.norm(b - a)
    labels = list(zone.labels) + [zone.labels[0]]
    return np.vstack(pts), np.concatenate(s), labels
