"""Orthonormal polynomial bases on the reference triangle and square, and
Lagrange interpolants expressed in them."""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import OutOfDomain, SingularVandermonde

DOMAIN_TOL = 1e-10
COND_FAIL = 1e12
COND_WARN = 1e8


class Domain(str, enum.Enum):
    TRIANGLE = "triangle"  # T = {x, y >= 0, x + y <= 1}
    SQUARE = "square"      # S = [-1, 1]^2


def domain_size(domain, n):
    return (n + 1) * (n + 2) // 2 if Domain(domain) is Domain.TRIANGLE else (n + 1) ** 2


def check_domain(domain, p, tol=DOMAIN_TOL):
    p = np.atleast_2d(p)
    if Domain(domain) is Domain.TRIANGLE:
        bad = (p[:, 0] < -tol) | (p[:, 1] < -tol) | (p[:, 0] + p[:, 1] > 1.0 + tol)
    else:
        bad = np.any(np.abs(p) > 1.0 + tol, axis=1)
    if np.any(bad):
        raise OutOfDomain(f"{int(bad.sum())} point(s) outside the reference {Domain(domain).value}")


def jacobi_table(t, alpha, jmax):
    """P_j^{(alpha, 0)}(t) for j = 0..jmax via the three-term recurrence.

    Works for complex ``t`` so complex-step derivatives are exact.
    """
    a = float(alpha)
    out = [np.ones_like(t)]
    if jmax >= 1:
        out.append(0.5 * ((a + 2.0) * t + a))
    for j in range(2, jmax + 1):
        c = 2.0 * j + a
        a1 = 2.0 * j * (j + a) * (c - 2.0)
        a2 = (c - 1.0) * (c * (c - 2.0) * t + a * a)
        a3 = 2.0 * (j + a - 1.0) * (j - 1.0) * c
        out.append((a2 * out[-1] - a3 * out[-2]) / a1)
    return out


def triangle_index(n):
    """Graded (i, j) index pairs, total degree i + j <= n."""
    return [(i, d - i) for d in range(n + 1) for i in range(d + 1)]


def _triangle_eval(x, y, n):
    # Q_i = (1 - y)^i P_i((2x + y - 1) / (1 - y)) via a recurrence that stays
    # regular at the collapsed vertex y = 1.
    s = 2.0 * x + y - 1.0
    w = (1.0 - y) ** 2
    Q = [np.ones_like(x)]
    if n >= 1:
        Q.append(s)
    for i in range(1, n):
        Q.append(((2 * i + 1) * s * Q[i] - i * w * Q[i - 1]) / (i + 1))
    t = 2.0 * y - 1.0
    P = {i: jacobi_table(t, 2 * i + 1, n - i) for i in range(n + 1)}
    cols = [np.sqrt(2.0 * (2 * i + 1) * (i + j + 1)) * Q[i] * P[i][j] for i, j in triangle_index(n)]
    return np.stack(cols, axis=-1)


def chebyshev_table(s, n):
    T = [np.ones_like(s)]
    if n >= 1:
        T.append(s)
    for k in range(1, n):
        T.append(2.0 * s * T[k] - T[k - 1])
    return T


def _square_eval(x, y, n):
    Tx, Ty = chebyshev_table(x, n), chebyshev_table(y, n)
    return np.stack([Tx[i] * Ty[j] for i in range(n + 1) for j in range(n + 1)], axis=-1)


@dataclass(frozen=True)
class PolyBasis:
    """Orthonormal Dubiner-type basis on T, or tensor Chebyshev basis on S."""

    domain: Domain
    degree: int

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        if self.degree < 0:
            raise ValueError("degree must be >= 0")

    @property
    def size(self):
        return domain_size(self.domain, self.degree)

    @property
    def basis_id(self):
        name = "dubiner" if self.domain is Domain.TRIANGLE else "chebyshev-tensor"
        return f"{name}-{self.degree}"

    def _raw(self, x, y):
        if self.domain is Domain.TRIANGLE:
            return _triangle_eval(x, y, self.degree)
        return _square_eval(x, y, self.degree)

    def __call__(self, p):
        """(M, N) basis values at points ``p`` (M, 2)."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return self._raw(p[:, 0], p[:, 1])

    def gradient(self, p):
        """(M, N, 2) basis gradients by complex-step differentiation."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        h = 1e-30
        x, y = p[:, 0].astype(complex), p[:, 1].astype(complex)
        gx = self._raw(x + 1j * h, y).imag / h
        gy = self._raw(x, y + 1j * h).imag / h
        return np.stack([gx, gy], axis=-1)

    def vandermonde(self, points):
        return self(points)


@dataclass
class Interpolant:
    """Per-band Lagrange interpolants sharing a node set."""

    basis: PolyBasis
    points: np.ndarray
    coeffs: np.ndarray  # (N, m)
    cond: float

    @property
    def bands(self):
        return self.coeffs.shape[1]

    def values(self, p, check=True):
        """(M, m) interpolated values of every band at ``p``."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        if check:
            check_domain(self.basis.domain, p)
        return self.basis(p) @ self.coeffs

    def to_dict(self):
        return {
            "basis": self.basis.basis_id,
            "domain": self.basis.domain.value,
            "degree": self.basis.degree,
            "points": [[float(f"{v:.17g}") for v in q] for q in self.points],
            "coeffs": [[float(f"{v:.17g}") for v in row] for row in self.coeffs],
            "cond": float(f"{self.cond:.17g}"),
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d):
        basis = PolyBasis(Domain(d["domain"]), int(d["degree"]))
        if d.get("basis", basis.basis_id) != basis.basis_id:
            raise ValueError(f"basis id mismatch: {d['basis']} vs {basis.basis_id}")
        return cls(basis, np.array(d["points"], dtype=float), np.array(d["coeffs"], dtype=float), float(d["cond"]))

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def _factor(basis, points):
    V = basis(points)
    if V.shape[0] != V.shape[1]:
        raise SingularVandermonde(f"need {basis.size} nodes, got {V.shape[0]}")
    with np.errstate(all="ignore"):
        cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond > COND_FAIL:
        raise SingularVandermonde(f"Vandermonde condition number {cond:.3g} exceeds {COND_FAIL:.0e}")
    if cond > COND_WARN:
        warnings.warn(f"ill-conditioned Vandermonde (cond {cond:.3g})", RuntimeWarning, stacklevel=3)
    return V, cond


def _node_points(nodes):
    pts = getattr(nodes, "points", nodes)
    return np.atleast_2d(np.asarray(pts, dtype=float))


def _node_basis(nodes, degree=None, domain=None):
    if hasattr(nodes, "domain"):
        return PolyBasis(nodes.domain, nodes.degree)
    return PolyBasis(domain, degree)


def build_interpolant(nodes, values, *, domain=None, degree=None) -> Interpolant:
    """Solve V c = f per band via QR. ``values`` is (m, N): one row per band."""
    basis = _node_basis(nodes, degree, domain)
    pts = _node_points(nodes)
    f = np.atleast_2d(np.asarray(values, dtype=float))
    if f.shape[1] != len(pts):
        raise ValueError(f"each band needs {len(pts)} values, got {f.shape[1]}")
    V, cond = _factor(basis, pts)
    Q, R = sla.qr(V)
    coeffs = sla.solve_triangular(R, Q.T @ f.T)
    return Interpolant(basis, pts.copy(), coeffs, cond)


def evaluate(interp: Interpolant, band: int, p):
    """Interpolated value(s) of one band at reference point(s) ``p``."""
    out = interp.values(p)[:, band]
    return float(out[0]) if np.ndim(p) == 1 else out


def cardinal_values(nodes, p, *, domain=None, degree=None):
    """Values l_i(p) of all cardinal functions; (N,) for one point else (M, N)."""
    basis = _node_basis(nodes, degree, domain)
    V, _ = _factor(basis, _node_points(nodes))
    phi = basis(p)
    L = np.linalg.solve(V.T, phi.T).T
    return L[0] if np.ndim(p) == 1 else L
