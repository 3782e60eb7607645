import warnings

import numpy as np
import pytest

from levyecf.exceptions import ConfigError, ConvergenceError
from levyecf.optimize import BoundaryWarning, minimize_cost


def test_convex_quadratic():
    res = minimize_cost(lambda x: (x[0] - 3.0) ** 2, [(0.0, 10.0)], [1.0])
    assert res.x[0] == pytest.approx(3.0, abs=1e-6)
    assert res.grad_norm < 1e-4 and not res.on_boundary


def test_polish_uses_residuals():
    target = np.array([0.3, -1.2])
    res = minimize_cost(lambda x: float(np.sum((x - target) ** 2)), [(-2, 2), (-2, 2)], [0.0, 0.0],
                        residuals=lambda x: x - target)
    np.testing.assert_allclose(res.x, target, atol=1e-10)
    assert any(s.polished for s in res.starts)


def test_multistart_finds_global_well():
    # wells at 0.5 (shallow) and 2.0 (deep); start in the shallow basin
    def cost(x):
        return min(0.5 + 10 * (x[0] - 0.5) ** 2, 10 * (x[0] - 2.0) ** 2)

    single = minimize_cost(cost, [(0.0, 3.0)], [0.4], n_starts=1)
    assert single.x[0] == pytest.approx(0.5, abs=1e-5)
    multi = minimize_cost(cost, [(0.0, 3.0)], [0.4], n_starts=5, seed=0)
    assert multi.x[0] == pytest.approx(2.0, abs=1e-5)
    assert len(multi.starts) == 5


def test_deterministic_given_seed():
    def cost(x):
        return float(np.sin(3 * x[0]) + 0.1 * x[0] ** 2 + (x[1] - 0.5) ** 2)

    a = minimize_cost(cost, [(-3, 3), (-1, 1)], seed=4)
    b = minimize_cost(cost, [(-3, 3), (-1, 1)], seed=4)
    assert np.array_equal(a.x, b.x) and a.to_dict() == b.to_dict()


def test_boundary_warning():
    with pytest.warns(BoundaryWarning):
        res = minimize_cost(lambda x: x[0], [(1.0, 2.0)], [1.5])
    assert res.on_boundary and res.x[0] == pytest.approx(1.0)
    assert res.grad_norm == 0.0  # projected gradient vanishes at an active bound


def test_all_starts_failing_raises_with_traces():
    with pytest.raises(ConvergenceError) as info:
        minimize_cost(lambda x: np.nan, [(0.0, 1.0)], [0.5], n_starts=2)
    assert len(info.value.traces) == 2


def test_iteration_budget_is_non_convergence():
    with pytest.raises(ConvergenceError):
        minimize_cost(lambda x: (x[0] - 0.123) ** 2, [(0.0, 1.0)], [0.9], n_starts=1, max_iter=3)


def test_bad_box_and_start():
    with pytest.raises(ConfigError):
        minimize_cost(lambda x: 0.0, [(1.0, 0.0)])
    with pytest.raises(ConfigError):
        minimize_cost(lambda x: 0.0, [(0.0, 1.0)], [0.1, 0.2])
    with pytest.raises(ConfigError):
        minimize_cost(lambda x: 0.0, [(0.0, 1.0)], n_starts=0)


def test_errors_inside_cost_are_infeasible():
    def cost(x):
        if x[0] > 0.8:
            raise ArithmeticError("unstable")
        return (x[0] - 0.5) ** 2

    with warnings.catch_warnings():
        warnings.simplefilter("error", BoundaryWarning)
        res = minimize_cost(cost, [(0.0, 1.0)], [0.2])
    assert res.x[0] == pytest.approx(0.5, abs=1e-6)
