"""Bloch-periodic P1 finite elements for the scalar TM/TE band problem.

The k-dependent sesquilinear form is expanded once into k-independent pieces

    a_k(u, v) = s(u, v) + k1 d1(u, v) + k2 d2(u, v) + |k|^2 m_alpha(u, v)

so each wave vector only costs a sparse linear combination and an
eigensolve of ``A(k) x = lam B x``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import AssemblyError, DegenerateEigenvalue, SolverFailure
from .mesh import BACKGROUND, INCLUSION, CellGeometry, UnitCellMesh

SHIFT = -1.0
RESIDUAL_TOL = 1e-9
DENSE_LIMIT = 3000


class Mode(str, enum.Enum):
    TM = "tm"
    TE = "te"

    @classmethod
    def parse(cls, x):
        return x if isinstance(x, cls) else cls(str(x).lower())


@dataclass(frozen=True)
class ModeCoefficients:
    """Per-region (background, inclusion) coefficients alpha and beta."""

    mode: Mode
    alpha: tuple
    beta: tuple

    @classmethod
    def for_mode(cls, mode, eps_background, eps_inclusion):
        mode = Mode.parse(mode)
        eps = (float(eps_background), float(eps_inclusion))
        if mode is Mode.TM:
            return cls(mode, (1.0, 1.0), eps)
        return cls(mode, (1.0 / eps[0], 1.0 / eps[1]), (1.0, 1.0))

    @classmethod
    def from_geometry(cls, geom: CellGeometry, mode):
        return cls.for_mode(mode, geom.eps_background, geom.eps_inclusion)


@dataclass(frozen=True)
class BlochSystem:
    S: sp.csr_matrix
    D1: sp.csr_matrix
    D2: sp.csr_matrix
    Malpha: sp.csr_matrix
    B: sp.csr_matrix
    dof_map: np.ndarray
    coeffs: ModeCoefficients

    @property
    def n_dofs(self):
        return self.S.shape[0]

    def operator(self, k):
        k1, k2 = float(k[0]), float(k[1])
        return (self.S + k1 * self.D1 + k2 * self.D2 + (k1 * k1 + k2 * k2) * self.Malpha).tocsc()


@dataclass
class BandSample:
    k: np.ndarray
    lambdas: np.ndarray
    eigvecs: np.ndarray | None = None

    @property
    def freqs(self):
        """Normalized frequencies omega a / (2 pi c)."""
        return np.sqrt(np.clip(self.lambdas, 0.0, None)) / (2.0 * np.pi)


def p1_gradients(p, t):
    """Barycentric gradients (T, 3, 2) and areas (T,) of P1 triangles."""
    P = p[t]
    e1 = P[:, 1] - P[:, 0]
    e2 = P[:, 2] - P[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # inverse transpose of the Jacobian applied to reference gradients
    inv = np.empty((len(t), 2, 2))
    inv[:, 0, 0] = e2[:, 1] / det
    inv[:, 0, 1] = -e2[:, 0] / det
    inv[:, 1, 0] = -e1[:, 1] / det
    inv[:, 1, 1] = e1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    G = np.einsum("aj,tjk->tak", ref, inv)
    return G, 0.5 * det


def assemble(mesh: UnitCellMesh, coeffs: ModeCoefficients) -> BlochSystem:
    region = np.asarray(mesh.region)
    if not np.all(np.isin(region, (BACKGROUND, INCLUSION))):
        raise AssemblyError("unknown region label in mesh")
    alpha = np.asarray(coeffs.alpha)[region]
    beta = np.asarray(coeffs.beta)[region]
    G, area = p1_gradients(mesh.vertices, mesh.triangles)
    if np.any(area <= 0):
        raise AssemblyError("mesh has non-positive triangle areas")

    mass_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    S_loc = (alpha * area)[:, None, None] * np.einsum("tak,tbk->tab", G, G)
    M_loc = (alpha * area)[:, None, None] * mass_ref
    B_loc = (beta * area)[:, None, None] * mass_ref
    # d_i(u, v) = i int alpha (u dv/dx_i - v du/dx_i), rows = test v, cols = trial u
    D_loc = [
        1j * (alpha * area / 3.0)[:, None, None] * (G[:, :, i][:, :, None] - G[:, :, i][:, None, :])
        for i in range(2)
    ]

    dof = mesh.dof_map()
    n = int(dof.max()) + 1
    tri = dof[mesh.triangles]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()

    def build(loc):
        return sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))

    return BlochSystem(build(S_loc), build(D_loc[0]), build(D_loc[1]), build(M_loc), build(B_loc), dof, coeffs)


def _b_orthonormalize(X, B, against=None, BV=None):
    """B-orthonormalize the columns of X (optionally against V with B V given)."""
    for _ in range(2):
        if against is not None and against.shape[1]:
            X = X - against @ (BV.conj().T @ X)
        BX = B @ X
        G = X.conj().T @ BX
        G = 0.5 * (G + G.conj().T)
        w, Q = np.linalg.eigh(G)
        keep = w > 1e-13 * max(w.max(), 1e-300)
        X = X @ (Q[:, keep] / np.sqrt(w[keep]))
    return X, B @ X


def _shift_invert_block(A, B, m, tol, rng, max_restarts=30):
    """Lowest m eigenpairs of (A, B) by block Krylov shift-invert with
    B-orthogonalization and Rayleigh-Ritz restarts."""
    n = A.shape[0]
    lu = splu((A - SHIFT * B).tocsc())
    p = min(n, m + max(4, m // 2))
    depth = max(2, min(8, n // p))
    X = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    for _ in range(max_restarts):
        V, BV = _b_orthonormalize(X, B)
        blocks, Bblocks = [V], [BV]
        for _ in range(depth - 1):
            W = lu.solve(np.asarray(Bblocks[-1]))
            Vall = np.hstack(blocks)
            BVall = np.hstack(Bblocks)
            W, BW = _b_orthonormalize(W, B, Vall, BVall)
            if W.shape[1] == 0:
                break
            blocks.append(W)
            Bblocks.append(BW)
        V = np.hstack(blocks)
        AV = A @ V
        H = V.conj().T @ AV
        H = 0.5 * (H + H.conj().T)
        Gm = V.conj().T @ (B @ V)
        Gm = 0.5 * (Gm + Gm.conj().T)
        theta, Y = sla.eigh(H, Gm)
        X = V @ Y[:, :p]
        lam = theta[:m]
        xs = X[:, :m]
        R = A @ xs - (B @ xs) * lam
        scale = np.linalg.norm(B @ xs, axis=0) * np.maximum(1.0, np.abs(lam))
        if np.all(np.linalg.norm(R, axis=0) <= tol * scale):
            return lam, xs
    raise SolverFailure("shift-invert iteration did not reach the residual tolerance")


def solve_bands(sys: BlochSystem, k, m: int, want_vectors: bool = False, method: str = "auto",
                tol: float = RESIDUAL_TOL, seed: int = 0) -> BandSample:
    """Lowest ``m`` eigenvalues of A(k) x = lam B x, ascending."""
    k = np.asarray(k, dtype=float)
    n = sys.n_dofs
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got {m}")
    A = sys.operator(k)
    B = sys.B
    if method not in ("auto", "iterative", "dense"):
        raise ValueError(f"unknown eigensolver method {method!r}")
    lam = X = None
    if method != "dense" and m + 8 < n:
        try:
            lam, X = _shift_invert_block(A, B, m, tol, np.random.default_rng(seed))
        except SolverFailure:
            if method == "iterative" or n > DENSE_LIMIT:
                raise
    if lam is None:
        lam, X = sla.eigh(A.toarray(), B.toarray(), subset_by_index=[0, m - 1])
        R = A @ X - (B @ X) * lam
        scale = np.linalg.norm(B @ X, axis=0) * np.maximum(1.0, np.abs(lam))
        if not np.all(np.linalg.norm(R, axis=0) <= max(tol, 1e-8) * scale):
            raise SolverFailure("dense eigensolve residual above tolerance")
    # B-normalize and report Rayleigh quotients
    BX = B @ X
    nrm = np.sqrt(np.real(np.einsum("ij,ij->j", X.conj(), BX)))
    X = X / nrm
    lam = np.real(np.einsum("ij,ij->j", X.conj(), A @ X))
    order = np.argsort(lam, kind="stable")
    lam, X = lam[order], X[:, order]
    return BandSample(k.copy(), lam, X if want_vectors else None)


def band_derivative(sys: BlochSystem, k, sample: BandSample, n: int, i: int, gap_tol: float = 1e-6) -> float:
    """d lambda_n / d k_i = 2 k_i m_alpha(u, u) + d_i(u, u) at a simple eigenvalue."""
    k = np.asarray(k, dtype=float)
    if sample.eigvecs is None or n + 1 >= len(sample.lambdas):
        sample = solve_bands(sys, k, max(n + 2, len(sample.lambdas)), want_vectors=True)
    lam = sample.lambdas
    scale = gap_tol * max(1.0, abs(lam[n]))
    if (n > 0 and lam[n] - lam[n - 1] <= scale) or lam[n + 1] - lam[n] <= scale:
        raise DegenerateEigenvalue(f"band {n} is not simple at k={k.tolist()}")
    u = sample.eigvecs[:, n]
    D = sys.D1 if i == 0 else sys.D2
    val = 2.0 * k[i] * np.vdot(u, sys.Malpha @ u) + np.vdot(u, D @ u)
    return float(np.real(val))
