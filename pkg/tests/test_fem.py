import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from bandinterp.errors import AssemblyError, DegenerateEigenvalue
from bandinterp.fem import (BandSample, Mode, ModeCoefficients, assemble, band_derivative, p1_gradients,
                            solve_bands)

PI = np.pi


def _herm_err(M):
    M = sp.csr_matrix(M)
    return abs(M - M.getH()).max() / max(abs(M).max(), 1e-300)


@pytest.fixture(scope="module")
def empty_sys(empty_mesh):
    g, m = empty_mesh
    return assemble(m, ModeCoefficients.from_geometry(g, "tm"))


def test_mode_coefficients():
    tm = ModeCoefficients.for_mode("TM", 1.0, 8.9)
    te = ModeCoefficients.for_mode(Mode.TE, 1.0, 8.9)
    assert tm.alpha == (1.0, 1.0) and tm.beta == (1.0, 8.9)
    assert te.beta == (1.0, 1.0) and te.alpha == (1.0, 1.0 / 8.9)


def test_uniform_medium_mass_equals_b(empty_sys):
    assert abs(empty_sys.Malpha - empty_sys.B).max() == 0.0


def test_constant_in_kernel(systems):
    for s in systems.values():
        one = np.ones(s.n_dofs)
        assert np.max(np.abs(s.S @ one)) <= 1e-10 * abs(s.S).max()
        for D in (s.D1, s.D2):
            assert abs(np.vdot(one, D @ one)) <= 1e-12 * abs(D).max() * s.n_dofs


def _cotangent_laplacian(mesh):
    """Independent P1 stiffness via the cotangent formula."""
    p, t = mesh.vertices, mesh.triangles
    dof = mesh.dof_map()
    n = dof.max() + 1
    rows, cols, vals = [], [], []
    for tri in t:
        for c in range(3):
            a, b = tri[(c + 1) % 3], tri[(c + 2) % 3]
            u, v = p[a] - p[tri[c]], p[b] - p[tri[c]]
            cot = np.dot(u, v) / abs(u[0] * v[1] - u[1] * v[0])
            for i, j, w in ((a, b, -0.5 * cot), (b, a, -0.5 * cot), (a, a, 0.5 * cot), (b, b, 0.5 * cot)):
                rows.append(dof[i])
                cols.append(dof[j])
                vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def test_stiffness_matches_cotangent_formula(square_mesh):
    _, m = square_mesh
    S = assemble(m, ModeCoefficients(Mode.TM, (1.0, 1.0), (1.0, 1.0))).S
    assert abs(S - _cotangent_laplacian(m)).max() <= 1e-12 * abs(S).max()


def test_te_scales_inclusion_stiffness(square_mesh):
    g, m = square_mesh
    bg = assemble(m, ModeCoefficients(Mode.TE, (1.0, 0.0), (1.0, 1.0))).S
    inc = assemble(m, ModeCoefficients(Mode.TE, (0.0, 1.0), (1.0, 1.0))).S
    te = assemble(m, ModeCoefficients.from_geometry(g, "te")).S
    tm = assemble(m, ModeCoefficients.from_geometry(g, "tm")).S
    assert abs(tm - (bg + inc)).max() <= 1e-12 * abs(tm).max()
    assert abs(te - (bg + inc / 8.9)).max() <= 1e-12 * abs(tm).max()


def test_element_gradients_reproduce_linear_functions(square_mesh, rng):
    _, m = square_mesh
    G, area = p1_gradients(m.vertices, m.triangles)
    c = rng.normal(size=2)
    f = m.vertices @ c
    grad = np.einsum("ta,tak->tk", f[m.triangles], G)
    assert np.allclose(grad, c, atol=1e-10)
    assert np.all(area > 0)


def test_bad_region_label(square_mesh):
    g, m = square_mesh
    from dataclasses import replace

    bad = replace(m, region=np.full(len(m.region), 7, dtype=np.int8))
    with pytest.raises(AssemblyError):
        assemble(bad, ModeCoefficients.from_geometry(g, "tm"))


def test_component_matrices_hermitian(systems):
    for s in systems.values():
        for M in (s.S, s.D1, s.D2, s.Malpha, s.B):
            assert _herm_err(M) <= 1e-12


def test_b_positive_definite_s_semidefinite(systems):
    s = systems["square", "te"]
    assert sla.eigvalsh(s.B.toarray()).min() > 0
    assert sla.eigvalsh(s.S.toarray()).min() >= -1e-10 * abs(s.S).max()


def test_operator_hermitian_random_k(systems, rng):
    for s in systems.values():
        for k in rng.uniform(-PI, PI, (10, 2)):
            assert _herm_err(s.operator(k)) <= 1e-12


def test_time_reversal(systems, rng):
    for s in systems.values():
        for k in rng.uniform(-PI, PI, (10, 2)):
            A, Am = s.operator(k), s.operator(-k)
            assert abs(Am - A.conj()).max() <= 1e-12 * abs(A).max()
            l1 = solve_bands(s, k, 6).lambdas
            l2 = solve_bands(s, -k, 6).lambdas
            assert np.max(np.abs(l1 - l2) / np.maximum(l1, 1e-300)) <= 1e-9


def test_eigenpairs_residual_rayleigh_normalization(systems, rng):
    for s in systems.values():
        k = rng.uniform(0, PI, 2)
        smp = solve_bands(s, k, 6, want_vectors=True)
        A, B, X, lam = s.operator(k), s.B, smp.eigvecs, smp.lambdas
        assert np.all(np.diff(lam) >= 0)
        assert lam[0] >= -1e-9 * max(1.0, lam[-1])
        G = X.conj().T @ (B @ X)
        assert np.max(np.abs(G - np.eye(6))) <= 1e-10
        for j in range(6):
            x = X[:, j]
            r = np.linalg.norm(A @ x - lam[j] * (B @ x))
            assert r <= 1e-8 * np.linalg.norm(B @ x) * max(1.0, lam[j])
            rq = np.real(np.vdot(x, A @ x) / np.vdot(x, B @ x))
            assert abs(rq - lam[j]) <= 1e-10 * max(lam[j], 1e-300)


def test_dense_and_iterative_agree(systems):
    s = systems["hexagonal", "tm"]
    k = np.array([1.0, 0.4])
    a = solve_bands(s, k, 6, method="iterative").lambdas
    b = solve_bands(s, k, 6, method="dense").lambdas
    assert np.allclose(a, b, rtol=1e-9)


def test_gamma_constant_mode(systems):
    for s in systems.values():
        smp = solve_bands(s, [0.0, 0.0], 4, want_vectors=True)
        assert abs(smp.lambdas[0]) <= 1e-9 * max(1.0, smp.lambdas[-1])
        u = smp.eigvecs[:, 0]
        u = u / u[np.argmax(np.abs(u))]
        assert np.max(np.abs(u - 1.0)) <= 1e-6


def test_empty_lattice_gamma_and_x(empty_sys):
    lam = solve_bands(empty_sys, [0, 0], 5).lambdas
    assert abs(lam[0]) <= 1e-9
    assert np.max(np.abs(lam[1:] - 4 * PI**2) / (4 * PI**2)) <= 0.02
    lam = solve_bands(empty_sys, [PI, 0], 2).lambdas
    assert np.max(np.abs(lam - PI**2) / PI**2) <= 0.02


def test_bad_band_count(systems):
    s = systems["square", "tm"]
    with pytest.raises(ValueError):
        solve_bands(s, [0, 0], 0)
    with pytest.raises(ValueError):
        solve_bands(s, [0, 0], s.n_dofs + 1)


def test_band_sample_frequency_normalization():
    smp = BandSample(np.zeros(2), np.array([0.0, 4 * PI**2]))
    assert np.allclose(smp.freqs, [0.0, 1.0])


def _fd(s, k, n, i, step=1e-4):
    e = np.zeros(2)
    e[i] = step
    return (solve_bands(s, k + e, n + 2).lambdas[n] - solve_bands(s, k - e, n + 2).lambdas[n]) / (2 * step)


def test_derivative_matches_finite_difference_square_tm(systems):
    s = systems["square", "tm"]
    k = np.array([0.3 * PI, 0.1 * PI])
    smp = solve_bands(s, k, 4, want_vectors=True)
    for i in range(2):
        d = band_derivative(s, k, smp, 0, i)
        assert abs(d - _fd(s, k, 0, i)) <= 1e-3 * abs(d)


def test_derivative_empty_lattice_band1(empty_sys):
    k = np.array([0.4, 0.25])
    smp = solve_bands(empty_sys, k, 3, want_vectors=True)
    for i in range(2):
        assert np.isclose(band_derivative(empty_sys, k, smp, 0, i), 2 * k[i], rtol=1e-2)


def test_derivative_vanishes_at_gamma(systems):
    s = systems["hexagonal", "te"]
    smp = solve_bands(s, [0.0, 0.0], 8, want_vectors=True)
    lam = smp.lambdas
    checked = 0
    for n in range(7):
        gap = 1e-6 * max(1.0, lam[n])
        if (n == 0 or lam[n] - lam[n - 1] > gap) and lam[n + 1] - lam[n] > gap:
            for i in range(2):
                assert abs(band_derivative(s, [0.0, 0.0], smp, n, i)) <= 1e-8 * max(1.0, lam[n])
            checked += 1
    assert checked >= 1


def test_degenerate_band_refused(empty_sys):
    # the two lowest empty-lattice bands meet at X; a wide gap threshold exposes it
    k = np.array([PI, 0.0])
    smp = solve_bands(empty_sys, k, 4, want_vectors=True)
    with pytest.raises(DegenerateEigenvalue):
        band_derivative(empty_sys, k, smp, 0, 0, gap_tol=0.05)


def test_lipschitz_along_gamma_x(systems):
    s = systems["square", "tm"]

    def max_slope(npts):
        ks = np.column_stack([np.linspace(0, PI, npts), np.zeros(npts)])
        lam = np.array([solve_bands(s, k, 4).lambdas for k in ks])
        assert np.all(np.diff(lam, axis=1) >= 0)
        return np.max(np.abs(np.diff(lam, axis=0))) / (PI / (npts - 1))

    coarse, fine = max_slope(11), max_slope(21)
    # a Lipschitz band keeps its difference quotient bounded under refinement
    assert fine <= 1.25 * coarse
