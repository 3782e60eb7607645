import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyecf.exceptions import ConfigError, StabilityError
from levyecf.levy import CompoundPoisson
from levyecf.systems import (DecayCertificate, SystemModel, apply_filter, build_system, convolve_u,
                             impulse_response, impulse_tail_bound, make_blocks)


def test_fir_non_minimum_phase_accepted():
    sys = build_system("fir", [1.0, 2.0])
    assert sys.spectral_radius == 0.0
    np.testing.assert_array_equal(impulse_response(sys, 3), [1.0, 2.0, 0.0, 0.0])


def test_arma_unstable_pole_rejected_with_moduli():
    with pytest.raises(StabilityError) as info:
        build_system("arma", [1.05], order=(1, 0))
    assert info.value.pole_moduli[0] == pytest.approx(1.05)


def test_margin_is_configurable():
    build_system("arma", [0.9999], order=(1, 0))
    with pytest.raises(StabilityError):
        build_system("arma", [0.9999], order=(1, 0), margin=1e-3)


def test_arma_impulse_response_long_division():
    sys = build_system("arma", [0.5, 3.0], order=(1, 1))
    h = impulse_response(sys, 6)
    # (1 + 3 q^-1) / (1 - 0.5 q^-1) = 1 + 3.5 q^-1 + 1.75 q^-2 + ...
    expected = np.r_[1.0, 3.5 * 0.5 ** np.arange(6)]
    np.testing.assert_allclose(h, expected, rtol=1e-14)


def test_ar1_geometric_and_identity():
    np.testing.assert_allclose(impulse_response(build_system("arma", [0.5], order=(1, 0)), 4),
                               0.5 ** np.arange(5), rtol=1e-15)
    np.testing.assert_array_equal(impulse_response(build_system("ma", []), 3), [1, 0, 0, 0])


def test_dimension_mismatch_and_unknown_structure():
    with pytest.raises(ConfigError):
        build_system("arma", [0.5], order=(1, 1))
    with pytest.raises(ConfigError):
        build_system("bogus", [1.0])
    with pytest.raises(ConfigError):
        impulse_response(build_system("ma", [1.0]), -1)


def test_state_space_matches_equivalent_arma():
    arma = build_system("arma", [0.5, 3.0], order=(1, 1))
    # x' = 0.5 x + u, y = 3.5 x + u
    ss = build_system("ss", [0.5, 1.0, 3.5, 1.0])
    np.testing.assert_allclose(impulse_response(ss, 10), impulse_response(arma, 10), rtol=1e-14)


@pytest.mark.parametrize("sys", [
    build_system("arma", [0.5, 3.0], order=(1, 1)),
    build_system("arma", [1.2, -0.5, 0.4, -2.0], order=(2, 2)),
    build_system("ma", [2.0]),
    build_system("fir", [0.3, 1.0, -2.0]),
])
def test_filter_reproduces_impulse_response(sys):
    impulse = np.zeros(40)
    impulse[0] = 1.0
    np.testing.assert_allclose(apply_filter(sys, impulse, 0), impulse_response(sys, 39), atol=1e-12)


def test_arma_filter_agrees_with_truncated_convolution():
    sys = build_system("arma", [1.2, -0.5, 0.4, -2.0], order=(2, 2))
    L = sys.default_warmup(1e-12)
    h = impulse_response(sys, L)
    x = np.random.default_rng(0).standard_normal(L + 300)
    direct = np.convolve(x, h)[L: L + 300]
    np.testing.assert_allclose(apply_filter(sys, x, L, 300), direct, atol=1e-10)


def test_filter_identity_and_length_errors():
    x = np.arange(5.0)
    np.testing.assert_array_equal(apply_filter(build_system("ma", []), x, 0), x)
    with pytest.raises(ConfigError):
        apply_filter(build_system("ma", [1.0]), x, 3, 4)


def test_filter_batches_along_last_axis():
    sys = build_system("arma", [0.5, 3.0], order=(1, 1))
    X = np.random.default_rng(1).standard_normal((3, 50))
    Y = apply_filter(sys, X, 10, 20)
    for row in range(3):
        np.testing.assert_array_equal(Y[row], apply_filter(sys, X[row], 10, 20))


def test_ma1_lag1_autocovariance():
    cp = CompoundPoisson(rate=1.0, jump="gaussian", jump_mu=1.0, jump_sigma=0.5, center=True)
    y = apply_filter(build_system("ma", [2.0]), cp.sample(400_001, 2), 1)
    var = cp.variance_rate()
    gamma1 = np.mean(y[1:] * y[:-1])
    # sd of the lag-1 product is about sqrt(17) var
    assert gamma1 == pytest.approx(2.0 * var, abs=5 * np.sqrt(17) * var / np.sqrt(y.size))


def test_stationarity_after_warmup():
    sys = build_system("arma", [0.9], order=(1, 0))
    y = apply_filter(sys, np.random.default_rng(3).standard_normal(200_000 + 400), 400)
    a, b = y[:100_000], y[100_000:]
    stationary_var = 1.0 / (1 - 0.81)
    assert a.var() == pytest.approx(stationary_var, rel=0.05)
    assert b.var() == pytest.approx(stationary_var, rel=0.05)
    assert abs(a.mean() - b.mean()) < 0.2


def test_convolve_examples():
    np.testing.assert_allclose(convolve_u([1.0, 0.5, 0.25], [1.0, 1.0], 4), [1.0, 1.5, 0.75, 0.25])
    np.testing.assert_array_equal(convolve_u([1.0, 0, 0, 0, 0], [3.0, 4.0, 5.0], 5), [3, 4, 5, 0, 0])
    h = np.array([1.0, 0.7, -0.2, 0.1])
    np.testing.assert_allclose(convolve_u(h, [2.5], 4), 2.5 * h)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6),
       st.lists(st.floats(-3, 3), min_size=1, max_size=4),
       st.lists(st.floats(-3, 3), min_size=1, max_size=4),
       st.floats(-2, 2))
def test_convolve_is_bilinear(h, u1, u2, c):
    r = min(len(u1), len(u2))
    u1, u2 = np.array(u1[:r]), np.array(u2[:r])
    K = len(h) + r
    lhs = convolve_u(h, u1 + c * u2, K)
    np.testing.assert_allclose(lhs, convolve_u(h, u1, K) + c * convolve_u(h, u2, K), atol=1e-10)
    g = np.ones(len(h))
    np.testing.assert_allclose(convolve_u(np.array(h) + c * g, u1, K),
                               convolve_u(h, u1, K) + c * convolve_u(g, u1, K), atol=1e-10)
    batch = convolve_u(h, np.vstack([u1, u2]), K)
    np.testing.assert_allclose(batch[1], convolve_u(h, u2, K))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.9, 0.9).filter(lambda z: abs(z) > 1e-3), min_size=1, max_size=4))
def test_inverted_zeros_are_accepted(zeros_inside):
    # zeros outside the unit disk (non-minimum phase): 1/z for z inside
    roots = 1.0 / np.array(zeros_inside)
    coeffs = np.poly(roots).real
    sys = build_system("fir", coeffs)
    assert sys.n_params == coeffs.size
    np.testing.assert_allclose(impulse_response(sys, coeffs.size - 1), coeffs)


def test_block_examples():
    b = make_blocks([1.0, 2.0, 3.0, 4.0], 2)
    np.testing.assert_array_equal(b.blocks, [[2.0, 1.0], [3.0, 2.0]])
    np.testing.assert_array_equal(make_blocks([1.0, 2.0, 3.0], 1).blocks, [[1.0], [2.0]])
    assert make_blocks(np.arange(1000.0), 5).N == 995
    with pytest.raises(ConfigError):
        make_blocks([1.0, 2.0], 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 20))
def test_blocks_overlap_in_r_minus_one_entries(r, extra):
    y = np.arange(r + 1 + extra, dtype=float)
    blocks = make_blocks(y, r).blocks
    assert blocks.shape == (extra + 1, r)
    np.testing.assert_array_equal(blocks[1:, 1:], blocks[:-1, :-1])


def test_tail_bound_dominates_true_tail():
    sys = build_system("arma", [1.2, -0.5, 0.4, -2.0], order=(2, 2))
    h = impulse_response(sys, 400)
    for L in (0, 5, 20, 60):
        assert np.abs(h[L + 1:]).sum() <= impulse_tail_bound(sys, L) * (1 + 1e-12)
    assert impulse_tail_bound(build_system("fir", [1.0, 2.0]), 3) == 0.0
    cert = DecayCertificate.for_system(sys)
    assert 0 < cert.gamma < 1


def test_default_warmup_makes_tail_negligible():
    sys = build_system("arma", [0.95], order=(1, 0))
    w = sys.default_warmup(1e-12)
    assert 0.95 ** w <= 1e-12


def test_dict_round_trip_and_hash():
    sys = build_system("arma", [0.5, 3.0], order=(1, 1))
    again = SystemModel.from_dict(sys.to_dict())
    assert again == sys and hash(again) == hash(sys)
    with pytest.raises(ConfigError):
        SystemModel.from_dict({"structure": "ma"})
    with pytest.raises(ConfigError):
        SystemModel.from_dict({"structure": "ma", "theta": [1.0], "extra": 1})
