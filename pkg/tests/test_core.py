import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyecf import core
from levyecf.core import (JointCF, UGrid, WeightMatrix, asymptotic_cov, average_scores, ecf,
                          iid_score_known_cf, joint_cf, longrun_cov, sandwich_cov, sensitivity_matrix,
                          simulated_score, theory_cov_C, theory_cov_Lambda, weighted_cost)
from levyecf.exceptions import ConfigError, IdentifiabilityError
from levyecf.levy import CompoundPoisson, Gaussian, VarianceGamma
from levyecf.mechanisms import ShiftFamily
from levyecf.systems import apply_filter, build_system, make_blocks

CP = CompoundPoisson(rate=1.0, jump="gaussian", jump_mu=1.0, jump_sigma=0.5, center=True)
VG = VarianceGamma(sigma=0.3, nu=0.4, theta_d=0.1, center=True)


def entrywise_standard_errors(values):
    """Standard errors of the entries of the empirical covariance of complex scores."""
    v = values - values.mean(axis=0)
    prods = v[:, :, None] * v[:, None, :].conj()
    N = values.shape[0]
    return prods.real.std(axis=0) / math.sqrt(N), prods.imag.std(axis=0) / math.sqrt(N)


# grids -----------------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ConfigError):
        UGrid([0.0, 1.0])
    with pytest.raises(ConfigError):
        UGrid([1.0, 1.0])
    with pytest.raises(ConfigError):
        UGrid(np.zeros((0, 2)))
    g = UGrid.symmetric([0.5, 1.0])
    assert g.M == 4 and g.r == 1 and g.is_symmetric
    assert not UGrid([0.5, 1.0]).is_symmetric
    assert UGrid.from_dict(g.to_dict()) == g


def test_default_grids_are_symmetric_and_scaled():
    g = core.default_scalar_grid(VG.char_fn, 4, target=0.1)
    assert g.is_symmetric and g.M == 8
    assert abs(VG.char_fn(g.points[:, 0].max())) == pytest.approx(0.1, abs=0.02)
    b = core.default_block_grid(3, 4, 2.0, seed=7)
    assert b.is_symmetric and b.points.shape == (8, 3) and np.abs(b.points).max() <= 2.0
    assert b == core.default_block_grid(3, 4, 2.0, seed=7)


# scores ----------------------------------------------------------------------

def test_iid_score_examples():
    assert iid_score_known_cf(1.7, 0.0, VG.char_fn) == 0
    assert iid_score_known_cf(0.0, 2.3, lambda u: 1.0) == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=5), st.floats(-20, 20))
def test_scores_bounded_by_two(x, u):
    assert np.all(np.abs(iid_score_known_cf(np.array(x), u, VG.char_fn)) <= 2 + 1e-12)
    a = np.array(x)
    assert np.all(np.abs(simulated_score(a[:, None], a[::-1, None], np.array([[u]]))) <= 2 + 1e-12)


def test_iid_scores_mean_zero_under_the_null():
    N = 1_000_000
    x = VG.sample(N, 2)
    assert abs(iid_score_known_cf(x, 1.0, VG.char_fn).mean()) <= 4 / math.sqrt(N)


def test_simulated_score_examples():
    y = np.array([[0.3, -1.0]])
    u = np.array([[1.0, 2.0]])
    assert simulated_score(y, y, u)[0, 0] == 0
    assert simulated_score(y, y + 1.0, np.zeros((1, 2)))[0, 0] == 0
    with pytest.raises(ConfigError):
        simulated_score(y, y, np.array([[1.0, 2.0, 3.0]]))


def test_simulated_scores_unbiased_for_matched_laws():
    N = 100_000
    sys = build_system("ma", [2.0])
    grid = UGrid.symmetric([[1.0, 0.5]])
    z = np.vstack([CP.sample(N + 3, 4), CP.sample(N + 3, 5)])
    y = apply_filter(sys, z, 1)
    real, sim = make_blocks(y[0], 2).blocks, make_blocks(y[1], 2).blocks
    mean = simulated_score(real, sim, grid.points).mean(axis=0)
    assert np.all(np.abs(mean) <= 6 / math.sqrt(N))


def test_average_scores_examples():
    assert average_scores(np.full((5, 1), 2 + 1j)).average[0] == 2 + 1j
    assert average_scores(np.array([1.0, 1j])).average[0] == pytest.approx(0.5 + 0.5j)
    alt = np.tile([1.0, -1.0], 5)
    assert average_scores(alt).average[0] == 0
    with pytest.raises(ConfigError):
        average_scores(np.zeros((0, 2)))


# weighting -------------------------------------------------------------------

def test_weighted_cost_examples():
    h = np.array([1 + 2j, -0.5j, 0.25])
    I = WeightMatrix.identity(3)
    assert weighted_cost(np.zeros(3), I) == 0
    assert weighted_cost(h, I) == pytest.approx(np.sum(np.abs(h) ** 2))
    A = np.random.default_rng(0).standard_normal((3, 3)) + 1j * np.random.default_rng(1).standard_normal((3, 3))
    K = A @ A.conj().T + np.eye(3)
    assert weighted_cost(h, WeightMatrix(2 * K, eps=0.0)) == pytest.approx(
        0.5 * weighted_cost(h, WeightMatrix(K, eps=0.0)), rel=1e-12)


def test_weight_matrix_validation_and_default_ridge():
    with pytest.raises(ConfigError, match="Hermitian"):
        WeightMatrix(np.array([[1.0, 1j], [1j, 1.0]]))
    with pytest.raises(ConfigError, match="negative"):
        WeightMatrix(np.diag([1.0, -1.0]))
    W = WeightMatrix(np.diag([2.0, 4.0]))
    assert W.eps == pytest.approx(1e-10 * 3.0)
    with pytest.raises(ConfigError, match="singular"):
        WeightMatrix(np.zeros((2, 2))).solve(np.ones(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000))
def test_weighted_cost_nonnegative(M, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    h = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    assert weighted_cost(h, WeightMatrix(A @ A.conj().T)) >= 0


# covariance formulas --------------------------------------------------------

def test_theory_cov_C_diagonal_and_degenerate():
    grid = UGrid([0.5, 1.0, 2.0])
    C = theory_cov_C(VG.char_fn, grid).K
    np.testing.assert_allclose(np.diag(C).real, 1 - np.abs(VG.char_fn(grid.points[:, 0])) ** 2)
    lattice = UGrid([2 * np.pi, 4 * np.pi])
    unit_jumps = CompoundPoisson(rate=1.0, jump="two_point", jump_a=1.0, jump_p=1.0)
    np.testing.assert_allclose(theory_cov_C(lambda u: np.ones_like(u, dtype=complex), lattice).K, 0)
    np.testing.assert_allclose(theory_cov_C(unit_jumps.char_fn, lattice).K, 0, atol=1e-12)


def test_theory_cov_C_matches_empirical_scores():
    N = 400_000
    grid = UGrid([0.5, 1.0, 2.0])
    x = VG.sample(N, 9)
    scores = iid_score_known_cf(x, grid.points[:, 0], VG.char_fn)
    emp = average_scores(scores).covariance()
    se_re, se_im = entrywise_standard_errors(scores)
    C = theory_cov_C(VG.char_fn, grid).K
    assert np.all(np.abs(emp.real - C.real) <= 5 * se_re + 1e-12)
    assert np.all(np.abs(emp.imag - C.imag) <= 5 * se_im + 1e-12)


def test_theory_cov_Lambda_properties_and_oracle():
    sys = build_system("ma", [2.0])
    jcf = JointCF(sys, CP)
    grid = UGrid([[1.0, 0.5], [-0.3, 0.8], [0.6, -1.2]])
    L = theory_cov_Lambda(jcf, grid).K
    np.testing.assert_array_equal(theory_cov_Lambda(jcf, grid, simulated=True).K, 2 * L)
    np.testing.assert_allclose(np.diag(L).real, 1 - np.abs(jcf(grid.points)) ** 2)
    assert np.linalg.eigvalsh(L).min() >= -1e-10
    # independent blocks, so the entrywise standard errors are valid
    N = 300_000
    y = apply_filter(sys, CP.sample(4 * N, 21).reshape(N, 4), 0)
    blocks = y[:, [2, 1]]  # (y_{n-1}, y_{n-2}) with both fully formed
    scores = np.exp(1j * blocks @ grid.points.T) - jcf(grid.points)
    emp = average_scores(scores).covariance()
    se_re, se_im = entrywise_standard_errors(scores)
    assert np.all(np.abs(emp.real - L.real) <= 5 * se_re + 1e-12)
    assert np.all(np.abs(emp.imag - L.imag) <= 5 * se_im + 1e-12)


# joint c.f. ------------------------------------------------------------------

def test_joint_cf_trivial_cases():
    sys = build_system("ma", [2.0])
    assert joint_cf(sys, CP, [0.0, 0.0]) == 1
    ident = build_system("ma", [])
    assert joint_cf(ident, VG, [0.7]) == pytest.approx(VG.char_fn(0.7), abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_joint_cf_ma1_closed_form(u1, u2, theta):
    # u1 y_{n-1} + u2 y_{n-2} = u1 z_{n-1} + (u1 theta + u2) z_{n-2} + u2 theta z_{n-3}
    sys = build_system("ma", [theta])
    phi = CP.char_fn
    expected = phi(u1) * phi(u1 * theta + u2) * phi(u2 * theta)
    assert joint_cf(sys, CP, [u1, u2]) == pytest.approx(expected, abs=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_joint_cf_truncation_is_certified(u1, u2):
    sys = build_system("arma", [1.2, -0.5, 0.4, -2.0], order=(2, 2))
    jcf = JointCF(sys, VG, tol=1e-10)
    u = np.array([u1, u2])
    value, K = jcf(u), jcf.last_terms
    assert abs(jcf(u, K=2 * K) - value) < 1e-10
    assert abs(jcf(u, K=8 * K) - value) <= max(float(jcf.remainder_bound(u[None], K)[0]), 1e-15) + 1e-15


def test_joint_cf_returns_terms_and_validates_tol():
    value, K = joint_cf(build_system("arma", [0.9], order=(1, 0)), CP, [1.0], return_terms=True)
    assert K >= 2 and abs(value) <= 1
    with pytest.raises(ConfigError):
        JointCF(build_system("ma", [1.0]), CP, tol=0.0)


# sensitivities and covariances ----------------------------------------------

def test_sensitivity_shift_family_identity():
    fam = ShiftFamily(Gaussian(mu=0.0, sigma=1.0))
    grid = UGrid.symmetric([0.5, 1.0, 2.0])
    u = grid.points[:, 0]
    sens = sensitivity_matrix(lambda pts, p: fam.cf(pts[:, 0], p), grid, [0.3])
    np.testing.assert_allclose(sens.matrix[:, 0], -1j * u * fam.cf(u, [0.3]), atol=1e-9)
    assert sens.richardson_error < 1e-8
    with pytest.raises(ConfigError):
        sensitivity_matrix(lambda pts, p: fam.cf(pts[:, 0], p), grid, [0.3], step=0.0)


def test_sensitivity_compound_poisson_rate():
    cp = CompoundPoisson(rate=1.0, jump="gaussian", jump_mu=0.4, jump_sigma=0.8)
    grid = UGrid([1.0])
    sens = sensitivity_matrix(lambda pts, p: cp.with_eta(p, ["rate"]).char_fn(pts[:, 0]), grid, [1.0])
    analytic = cp.h * (cp.jump_cf(1.0) - 1) * cp.char_fn(1.0)
    assert -sens.matrix[0, 0] == pytest.approx(analytic, abs=1e-6)


def test_sensitivity_reports_evaluator_failure():
    def broken(pts, p):
        if p[0] > 1.0:
            raise ValueError("outside domain")
        return np.ones(len(pts), dtype=complex)

    with pytest.raises(ConfigError, match="stencil"):
        sensitivity_matrix(broken, UGrid([1.0, 2.0]), [1.0])


def _random_instance(rng, M=6, q=2):
    """Symmetric-grid shaped complex H and Lambda (real information matrices)."""
    half = M // 2
    A = rng.standard_normal((half, q)) + 1j * rng.standard_normal((half, q))
    H = np.vstack([A, A.conj()])
    X = rng.standard_normal((M, 3 * M)) + 1j * rng.standard_normal((M, 3 * M))
    X = np.vstack([X[:half], X[:half].conj()])
    Lam = X @ X.conj().T / (3 * M) + 0.1 * np.eye(M)
    return H, Lam


def test_factor_two_and_sandwich_collapse():
    rng = np.random.default_rng(0)
    H, Lam = _random_instance(rng)
    W = WeightMatrix(Lam, eps=0.0)
    S1 = asymptotic_cov(H, W)
    np.testing.assert_array_equal(asymptotic_cov(H, W, factor=2.0), 2 * S1)
    np.testing.assert_allclose(sandwich_cov(H, W, Lam), S1, atol=1e-10, rtol=0)
    assert np.allclose(S1, S1.T) and np.linalg.eigvalsh(S1).min() > 0


def test_identity_weighting_is_never_better():
    rng = np.random.default_rng(1)
    for _ in range(100):
        H, Lam = _random_instance(rng, M=6, q=2)
        opt = asymptotic_cov(H, WeightMatrix(Lam, eps=0.0))
        ident = sandwich_cov(H, WeightMatrix.identity(6), Lam)
        assert np.linalg.eigvalsh(ident - opt).min() >= -1e-10
        assert np.trace(ident) >= np.trace(opt) - 1e-12


def test_rank_deficiency_names_null_direction():
    H = np.array([[1.0, 2.0], [2.0, 4.0], [-1.0, -2.0]], dtype=complex)
    with pytest.raises(IdentifiabilityError) as info:
        asymptotic_cov(H, WeightMatrix.identity(3))
    d = info.value.null_direction
    assert abs(abs(d[0]) / abs(d[1]) - 2.0) < 1e-8


def test_asymmetric_grid_complex_information_is_rejected():
    H = np.array([[1.0, 1j], [1.0, 1.0]])
    with pytest.raises(ConfigError, match="u -> -u"):
        asymptotic_cov(H, WeightMatrix.identity(2))


def test_longrun_cov_reduces_to_lambda_for_iid_blocks():
    ident = build_system("ma", [])
    jcf = JointCF(ident, VG)
    grid = UGrid.symmetric([0.5, 1.5])
    np.testing.assert_allclose(longrun_cov(jcf, grid, 0), theory_cov_Lambda(jcf, grid).K, atol=1e-15)
    np.testing.assert_allclose(longrun_cov(jcf, grid, 3), theory_cov_Lambda(jcf, grid).K, atol=1e-12)


def test_longrun_cov_matches_replicated_ecf_variance():
    sys = build_system("ma", [2.0])
    jcf = JointCF(sys, CP)
    grid = UGrid.symmetric([[0.6, -0.4]])
    S = longrun_cov(jcf, grid, 2)  # r + q - 1 lags for MA(1), r = 2
    N, R = 2000, 1500
    z = CP.sample(R * (N + 3), 17).reshape(R, N + 3)
    y = apply_filter(sys, z, 1)
    means = np.array([ecf(make_blocks(row, 2).blocks, grid) for row in y])
    emp = N * np.cov(means.T)
    # 1500 replications: about 4% relative sampling error on the diagonal
    np.testing.assert_allclose(np.diag(emp).real, np.diag(S).real, rtol=0.15)
    assert not np.allclose(np.diag(S).real, np.diag(theory_cov_Lambda(jcf, grid).K).real, rtol=0.05)
