"""ECF estimators: i.i.d. with known c.f., i.i.d. with simulated scores,
output-error identification of system dynamics, and the joint variant.

Every estimator minimizes ``V_N = hbar^* K^-1 hbar`` in two stages
(``K = I``, then the estimated optimal weighting at the stage-1 estimate).
Simulated scores use common random numbers: one noise draw, fixed by
``seed``, is reused for every parameter value, so the cost is a
deterministic function of the parameters.

The functional entry points take an :class:`EstimationProblem`; the
scikit-learn style classes at the bottom build one from their
constructor arguments.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import core
from ._validation import check_series, check_seed
from .core import JointCF, UGrid, WeightMatrix
from .exceptions import ConfigError
from .levy import NoiseModel
from .mechanisms import NoiseFamily, NoiseMechanism, default_bounds
from .optimize import BoundaryWarning, minimize_cost
from .systems import SystemModel, apply_filter, make_blocks

__all__ = [
    "EstimationProblem",
    "EstimationResult",
    "estimate_iid_known_cf",
    "estimate_iid_simulated",
    "estimate_dynamics",
    "estimate_joint",
    "dynamics_objective",
    "joint_objective",
    "ECFEstimator",
    "SimulatedECFEstimator",
    "ECFDynamicsEstimator",
    "ECFJointEstimator",
]

WEIGHTINGS = ("two-stage", "identity", "fixed", "longrun")


@dataclass
class EstimationProblem:
    """Everything needed to run one estimator on one data set.

    ``noise`` is the known noise law (dynamics) or the template whose
    ``free_eta`` parameters are estimated (i.i.d., joint). ``system`` holds
    the structure and the starting ``theta``; ``free_theta`` lists the
    indices of ``theta`` that are estimated (default: all). ``bounds`` covers
    the free parameters, theta first.
    """

    data: Any
    noise: NoiseModel | None = None
    system: SystemModel | None = None
    free_theta: Any = None
    free_eta: Any = None
    family: Any = None
    mechanism: Any = None
    grid: UGrid | None = None
    r: int = 1
    weighting: str = "two-stage"
    K: Any = None
    bounds: Any = None
    start: Any = None
    n_sim: int | None = None
    seed: int = 0
    n_starts: int = 5
    optimizer_seed: int = 0
    grid_seed: int = 0
    grid_size: int | None = None
    warmup: int | None = None
    min_n: int = 10

    def __post_init__(self):
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.weighting == "fixed" and self.K is None:
            raise ConfigError("weighting 'fixed' needs a matrix K")
        if self.n_sim is not None and (int(self.n_sim) != self.n_sim or self.n_sim < 1):
            raise ConfigError(f"n_sim must be a positive integer, got {self.n_sim!r}")
        self.seed = check_seed(self.seed, "seed")
        self.optimizer_seed = check_seed(self.optimizer_seed, "optimizer_seed")
        self.grid_seed = check_seed(self.grid_seed, "grid_seed")


@dataclass
class EstimationResult:
    """Outcome of one estimation run (all covariances already divided by N)."""

    estimator: str
    estimate: np.ndarray
    param_names: list
    cost: float
    weight: WeightMatrix
    weighting: str
    grid: UGrid
    n_obs: int
    covariance: np.ndarray | None = None
    cov_factor: float | None = None
    covariance_longrun: np.ndarray | None = None
    stage1_estimate: np.ndarray | None = None
    grad_norm: float = math.nan
    boundary_hit: bool = False
    seeds: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)
    sensitivity_error: float | None = None
    experimental: bool = False

    @property
    def standard_errors(self) -> np.ndarray | None:
        if self.covariance is None:
            return None
        return np.sqrt(np.diag(self.covariance))

    def confidence_interval(self, level: float = 0.95) -> np.ndarray:
        from scipy.stats import norm

        if self.covariance is None:
            raise ValueError("no covariance available for this estimator")
        z = norm.ppf(0.5 + level / 2)
        se = self.standard_errors
        return np.column_stack([self.estimate - z * se, self.estimate + z * se])

    def to_dict(self) -> dict:
        def mat(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "estimator": self.estimator,
            "estimate": self.estimate.tolist(),
            "param_names": list(self.param_names),
            "cost": self.cost,
            "covariance": mat(self.covariance),
            "cov_factor": self.cov_factor,
            "covariance_longrun": mat(self.covariance_longrun),
            "weighting": self.weighting,
            "weight": self.weight.to_dict(),
            "grid": self.grid.to_dict(),
            "n_obs": self.n_obs,
            "stage1_estimate": mat(self.stage1_estimate),
            "grad_norm": self.grad_norm,
            "boundary_hit": self.boundary_hit,
            "seeds": dict(self.seeds),
            "trace": self.trace,
            "sensitivity_error": self.sensitivity_error,
            "experimental": self.experimental,
        }


# shared machinery ----------------------------------------------------------

def _residual_fns(hbar, K: WeightMatrix):
    def residuals(x):
        z = K.whiten(hbar(x))
        return np.concatenate([z.real, z.imag])

    def cost(x):
        r = residuals(x)
        return float(r @ r)

    return cost, residuals


def _check_overdetermined(M, q):
    if q < 1:
        raise ConfigError("nothing to estimate: no free parameters")
    if M <= q:
        raise ConfigError(f"need more moment conditions than parameters: M = {M} <= {q}")


def _resolve_bounds(problem, start, kinds):
    if problem.bounds is None:
        return default_bounds(start, kinds)
    b = np.asarray(problem.bounds, dtype=float)
    if b.shape != (len(start), 2):
        raise ConfigError(f"bounds must have shape ({len(start)}, 2), got {b.shape}")
    if not np.all((b[:, 0] < start) & (start < b[:, 1])):
        raise ConfigError("the starting point must lie in the interior of the bounds")
    return b


def _two_stage(hbar, optimal_weight, M, bounds, start, problem):
    """Stage 1 with ``K = I`` (or the fixed K); stage 2 with ``optimal_weight``."""
    if problem.weighting == "fixed":
        K1 = problem.K if isinstance(problem.K, WeightMatrix) else WeightMatrix(problem.K)
        if K1.M != M:
            raise ConfigError(f"fixed K is {K1.M}x{K1.M}, grid has M = {M}")
    else:
        K1 = WeightMatrix.identity(M)
    cost1, res1 = _residual_fns(hbar, K1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryWarning)
        opt1 = minimize_cost(cost1, bounds, start, residuals=res1, n_starts=problem.n_starts,
                             seed=problem.optimizer_seed)
    trace = {"stage1": opt1.to_dict()}
    if problem.weighting in ("identity", "fixed"):
        final, K = opt1, K1
    else:
        K = optimal_weight(opt1.x)
        cost2, res2 = _residual_fns(hbar, K)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryWarning)
            final = minimize_cost(cost2, bounds, opt1.x, residuals=res2, n_starts=1,
                                  seed=problem.optimizer_seed)
        trace["stage2"] = final.to_dict()
    if final.on_boundary:
        warnings.warn(f"estimate {final.x.tolist()} lies on the search-box boundary",
                      BoundaryWarning, stacklevel=3)
    return final, K, opt1.x, trace


# i.i.d. with known c.f. ----------------------------------------------------

def _iid_family(problem):
    if problem.family is not None:
        return problem.family
    if problem.noise is None:
        raise ConfigError("i.i.d. estimation needs a noise template or a c.f. family")
    return NoiseFamily(problem.noise, problem.free_eta)


def _start(problem, family):
    return np.asarray(family.start if problem.start is None else problem.start, dtype=float).ravel()


def estimate_iid_known_cf(problem: EstimationProblem) -> EstimationResult:
    """Fit a c.f. family to i.i.d. data through the empirical c.f."""
    x = check_series(problem.data, problem.min_n)
    family = _iid_family(problem)
    start = _start(problem, family)
    grid = problem.grid
    if grid is None:
        grid = core.default_scalar_grid(lambda u: family.cf(u, start), problem.grid_size or 4)
    if grid.r != 1:
        raise ConfigError("i.i.d. estimation needs a scalar grid (r = 1)")
    _check_overdetermined(grid.M, start.size)
    bounds = _resolve_bounds(problem, start, family.kinds())
    u = grid.points[:, 0]
    data_ecf = core.ecf(x, grid)

    def hbar(eta):
        return data_ecf - family.cf(u, eta)

    def C_at(eta):
        return core.theory_cov_C(lambda v: family.cf(v, eta), grid)

    opt, K, stage1, trace = _two_stage(hbar, C_at, grid.M, bounds, start, problem)
    eta = opt.x
    N = x.size
    sens = core.sensitivity_matrix(lambda pts, p: family.cf(pts[:, 0], p), grid, eta)
    C = C_at(eta)
    if problem.weighting == "two-stage":
        cov = core.asymptotic_cov(sens.matrix, C) / N
    else:
        cov = core.sandwich_cov(sens.matrix, K, C.K) / N
    return EstimationResult(
        "iid_known_cf", eta, list(family.param_names), opt.fun, K, problem.weighting, grid, N,
        covariance=cov, cov_factor=1.0, stage1_estimate=stage1, grad_norm=opt.grad_norm,
        boundary_hit=opt.on_boundary, seeds={"optimizer": problem.optimizer_seed},
        trace=trace, sensitivity_error=sens.richardson_error)


# i.i.d. with simulated scores ---------------------------------------------

def estimate_iid_simulated(problem: EstimationProblem, mechanism=None) -> EstimationResult:
    """Fit ``eta`` when only a simulator ``xi = F(rho, eta)`` is available.

    The optimal weighting is estimated from the per-sample scores, so no
    c.f. is ever evaluated. With ``n_sim == N`` the covariance carries the
    factor 2 relative to the known-c.f. estimator.
    """
    mechanism = mechanism if mechanism is not None else problem.mechanism
    if mechanism is None:
        if problem.noise is None:
            raise ConfigError("simulated-score estimation needs a mechanism")
        mechanism = NoiseMechanism(problem.noise, problem.free_eta)
    x = check_series(problem.data, problem.min_n)
    N = x.size
    n_sim = N if problem.n_sim is None else int(problem.n_sim)
    start = _start(problem, mechanism)
    rho = mechanism.draw(np.random.default_rng(problem.seed), n_sim)
    grid = problem.grid
    if grid is None:
        sim0 = mechanism.apply(rho, start)
        grid = core.default_scalar_grid(lambda u: core.ecf(sim0, UGrid([float(u)]))[0],
                                        problem.grid_size or 4)
    if grid.r != 1:
        raise ConfigError("i.i.d. estimation needs a scalar grid (r = 1)")
    _check_overdetermined(grid.M, start.size)
    bounds = _resolve_bounds(problem, start, mechanism.kinds())
    data_ecf = core.ecf(x, grid)
    data_scores = core.average_scores(core.iid_score_known_cf(x, grid.points[:, 0], lambda u: 0.0))

    def hbar(eta):
        return data_ecf - core.ecf(mechanism.apply(rho, eta), grid)

    def lambda_prime(eta):
        sim = core.average_scores(
            core.iid_score_known_cf(mechanism.apply(rho, eta), grid.points[:, 0], lambda u: 0.0))
        return WeightMatrix(data_scores.covariance() + (N / n_sim) * sim.covariance())

    opt, K, stage1, trace = _two_stage(hbar, lambda_prime, grid.M, bounds, start, problem)
    eta = opt.x
    sens = core.sensitivity_matrix(lambda pts, p: core.ecf(mechanism.apply(rho, p), grid), grid, eta)
    Lp = lambda_prime(eta)
    if problem.weighting == "two-stage":
        cov = core.asymptotic_cov(sens.matrix, Lp) / N
    else:
        cov = core.sandwich_cov(sens.matrix, K, Lp.K) / N
    return EstimationResult(
        "iid_simulated", eta, list(mechanism.param_names), opt.fun, K, problem.weighting, grid, N,
        covariance=cov, cov_factor=1.0 + N / n_sim, stage1_estimate=stage1, grad_norm=opt.grad_norm,
        boundary_hit=opt.on_boundary,
        seeds={"simulation": problem.seed, "optimizer": problem.optimizer_seed},
        trace=trace, sensitivity_error=sens.richardson_error)


# system dynamics -----------------------------------------------------------

class _BlockObjective:
    """``hbar(theta, eta)`` of the output-error ECF for one data set.

    The simulated noise comes from ``template.draw_base`` with a fixed seed;
    ``known`` (when given) short-cuts the noise to a fixed sample so that
    the dynamics-only objective never re-maps the base draws.
    """

    def __init__(self, problem: EstimationProblem, free_eta=(), need_noise_map=False):
        if problem.system is None or problem.noise is None:
            raise ConfigError("system identification needs both a system and a noise model")
        y = check_series(problem.data, problem.r + problem.min_n)
        self.problem = problem
        self.system = problem.system
        self.noise = problem.noise
        self.r = int(problem.r)
        if self.r < 1:
            raise ConfigError("block length r must be >= 1")
        self.blocks = make_blocks(y, self.r).blocks
        self.N = self.blocks.shape[0]
        self.n_sim = self.N if problem.n_sim is None else int(problem.n_sim)
        p = self.system.n_params
        if p == 0:
            raise ConfigError("the system has no parameters to estimate")
        free = range(p) if problem.free_theta is None else problem.free_theta
        self.free_theta = np.array(sorted(set(int(i) for i in free)), dtype=int)
        if self.free_theta.size and (self.free_theta.min() < 0 or self.free_theta.max() >= p):
            raise ConfigError(f"free_theta indices must lie in [0, {p})")
        self.free_eta = tuple(free_eta)
        self.warmup = self._warmup()
        total = self.n_sim + self.r + self.warmup
        base_rng = np.random.default_rng(problem.seed)
        if not self.noise.samplable:
            raise ConfigError(f"noise family {self.noise.family!r} cannot be sampled")
        self.base = self.noise.draw_base(base_rng, total)
        self.fixed_noise = None if need_noise_map else self.noise.from_base(self.base)

    def _warmup(self):
        if self.problem.warmup is not None:
            return int(self.problem.warmup)
        w = self.system.default_warmup()
        if self.system.structure not in ("fir", "ma"):
            w = max(w, 200)
        return w

    def theta_full(self, theta_free):
        theta = np.array(self.system.theta, dtype=float)
        theta[self.free_theta] = theta_free
        return theta

    def system_at(self, theta_free) -> SystemModel:
        return self.system.with_theta(self.theta_full(theta_free))

    def noise_at(self, eta_free) -> NoiseModel:
        if not self.free_eta:
            return self.noise
        return self.noise.with_eta(eta_free, self.free_eta)

    def sim_blocks(self, theta_free, eta_free=()):
        sys = self.system_at(theta_free)
        z = self.fixed_noise if self.fixed_noise is not None else self.noise_at(eta_free).from_base(self.base)
        y = apply_filter(sys, z, self.warmup, self.n_sim + self.r)
        return make_blocks(y, self.r).blocks

    def data_ecf(self, grid):
        return core.ecf(self.blocks, grid)

    def joint(self, theta_free, eta_free=()) -> JointCF:
        return JointCF(self.system_at(theta_free), self.noise_at(eta_free), tol=1e-13)

    def default_grid(self, start_theta, start_eta=()):
        jcf = self.joint(start_theta, start_eta)
        e1 = np.zeros(self.r)
        e1[0] = 1.0
        u_max = core._first_crossing(lambda c: float(abs(jcf(c * e1))), 0.1)
        return core.default_block_grid(self.r, self.problem.grid_size or 3, u_max,
                                       self.problem.grid_seed)

    def longrun_lag(self, sys: SystemModel) -> int:
        if sys.structure in ("fir", "ma"):
            return self.r + sys.state_dim - 1
        return min(self.r + sys.default_warmup(1e-10), 500)


def dynamics_objective(problem: EstimationProblem):
    """``(hbar, grid, objective)`` of the dynamics-only estimator (for tests and plots)."""
    obj = _BlockObjective(problem)
    start = obj.system.theta[obj.free_theta]
    grid = problem.grid or obj.default_grid(start)
    data_ecf = obj.data_ecf(grid)

    def hbar(theta_free):
        return data_ecf - core.ecf(obj.sim_blocks(theta_free), grid)

    return hbar, grid, obj


def joint_objective(problem: EstimationProblem):
    """``(hbar, grid, objective)`` over ``(theta_free, eta_free)`` stacked."""
    free_eta = problem.noise.param_names if problem.free_eta is None else tuple(problem.free_eta)
    obj = _BlockObjective(problem, free_eta, need_noise_map=True)
    n_th = obj.free_theta.size
    start_theta = obj.system.theta[obj.free_theta]
    start_eta = np.array([getattr(problem.noise, n) for n in free_eta])
    grid = problem.grid or obj.default_grid(start_theta, start_eta)
    data_ecf = obj.data_ecf(grid)

    def hbar(x):
        return data_ecf - core.ecf(obj.sim_blocks(x[:n_th], x[n_th:]), grid)

    return hbar, grid, obj


def _theta_kinds(sys):
    return ["real"] * sys.n_params


def estimate_dynamics(problem: EstimationProblem, known_eta: NoiseModel | None = None) -> EstimationResult:
    """Output-error ECF estimate of ``theta`` with the noise law known.

    Reports ``2 (H^* Lambda^-1 H)^-1 / N`` and, separately, the sandwich
    with the long-run (serially correlated) score covariance of the
    overlapping blocks.
    """
    if known_eta is not None:
        problem = _replace(problem, noise=known_eta)
    hbar, grid, obj = dynamics_objective(problem)
    start = (obj.system.theta[obj.free_theta] if problem.start is None
             else np.asarray(problem.start, dtype=float).ravel())
    if obj.free_theta.size == 0:
        raise ConfigError("nothing to estimate: no free theta")
    _check_overdetermined(grid.M, start.size)
    if grid.r != obj.r:
        raise ConfigError(f"grid vectors have length {grid.r}, block length is {obj.r}")
    kinds = [_theta_kinds(obj.system)[i] for i in obj.free_theta]
    bounds = _resolve_bounds(problem, start, kinds)

    def optimal_weight(theta):
        jcf = obj.joint(theta)
        if problem.weighting == "longrun":
            return WeightMatrix(core.longrun_cov(jcf, grid, obj.longrun_lag(jcf.sys), simulated=True))
        return core.theory_cov_Lambda(jcf, grid, simulated=True)

    opt, K, stage1, trace = _two_stage(hbar, optimal_weight, grid.M, bounds, start, problem)
    theta = opt.x
    N = obj.N
    jcf = obj.joint(theta)
    k_fixed = 2 * jcf.truncation(np.concatenate([grid.points, grid.differences().reshape(-1, grid.r)]))

    def phi_theta(pts, th):
        return obj.joint(th)(pts, K=k_fixed)

    sens = core.sensitivity_matrix(phi_theta, grid, theta)
    Lam = core.theory_cov_Lambda(jcf, grid)
    S_lr = core.longrun_cov(jcf, grid, obj.longrun_lag(jcf.sys), simulated=True)
    if problem.weighting == "two-stage":
        cov = core.asymptotic_cov(sens.matrix, Lam, factor=2.0) / N
    elif problem.weighting == "longrun":
        cov = core.asymptotic_cov(sens.matrix, WeightMatrix(S_lr)) / N
    else:
        cov = core.sandwich_cov(sens.matrix, K, 2.0 * Lam.K) / N
    cov_lr = core.sandwich_cov(sens.matrix, K, S_lr) / N
    names = [f"theta[{i}]" for i in obj.free_theta]
    return EstimationResult(
        "dynamics", theta, names, opt.fun, K, problem.weighting, grid, N,
        covariance=cov, cov_factor=2.0, covariance_longrun=cov_lr, stage1_estimate=stage1,
        grad_norm=opt.grad_norm, boundary_hit=opt.on_boundary,
        seeds={"simulation": problem.seed, "optimizer": problem.optimizer_seed,
               "grid": problem.grid_seed},
        trace={**trace, "warmup": obj.warmup, "n_sim": obj.n_sim},
        sensitivity_error=sens.richardson_error)


def estimate_joint(problem: EstimationProblem) -> EstimationResult:
    """Joint output-error fit of ``(theta, eta)``; experimental, no covariance."""
    hbar, grid, obj = joint_objective(problem)
    n_th = obj.free_theta.size
    start_theta = obj.system.theta[obj.free_theta]
    start_eta = np.array([getattr(problem.noise, n) for n in obj.free_eta])
    start = (np.concatenate([start_theta, start_eta]) if problem.start is None
             else np.asarray(problem.start, dtype=float).ravel())
    if n_th == 0 or not obj.free_eta:
        raise ConfigError("joint estimation needs free theta and free eta")
    _check_overdetermined(grid.M, start.size)
    kinds = ([_theta_kinds(obj.system)[i] for i in obj.free_theta]
             + [problem.noise.param_kinds[n] for n in obj.free_eta])
    bounds = _resolve_bounds(problem, start, kinds)

    def optimal_weight(x):
        return core.theory_cov_Lambda(obj.joint(x[:n_th], x[n_th:]), grid, simulated=True)

    opt, K, stage1, trace = _two_stage(hbar, optimal_weight, grid.M, bounds, start, problem)
    names = [f"theta[{i}]" for i in obj.free_theta] + list(obj.free_eta)
    return EstimationResult(
        "joint", opt.x, names, opt.fun, K, problem.weighting, grid, obj.N,
        stage1_estimate=stage1, grad_norm=opt.grad_norm, boundary_hit=opt.on_boundary,
        seeds={"simulation": problem.seed, "optimizer": problem.optimizer_seed,
               "grid": problem.grid_seed},
        trace={**trace, "warmup": obj.warmup, "n_sim": obj.n_sim}, experimental=True)


def _replace(problem, **changes):
    import dataclasses

    return dataclasses.replace(problem, **changes)


# scikit-learn style estimators --------------------------------------------

class _ECFBase(BaseEstimator):
    def _problem(self, X, **extra):
        kwargs = dict(
            data=X, grid=self.grid, weighting=self.weighting, bounds=self.bounds,
            n_starts=self.n_starts, seed=self.random_state, optimizer_seed=self.random_state,
        )
        kwargs.update(extra)
        return EstimationProblem(**kwargs)

    def _store(self, result):
        self.result_ = result
        self.grid_ = result.grid
        self.weight_ = result.weight
        self.cost_ = result.cost
        self.covariance_ = result.covariance
        self.n_features_in_ = 1
        return self

    def score(self, X, y=None):
        """Negative ECF cost at the fitted parameters (higher is better)."""
        check_is_fitted(self, "result_")
        hbar = self._hbar_on(X)
        return -core.weighted_cost(hbar, self.weight_)


class ECFEstimator(_ECFBase):
    """Empirical c.f. estimator for i.i.d. samples from a family with known c.f.

    Parameters
    ----------
    noise : NoiseModel
        Template law; its values of the free parameters are the start.
    free : sequence of str, optional
        Names of the estimated parameters (default: all).
    family : object, optional
        Alternative c.f. family with ``param_names``, ``start``, ``cf`` and
        ``kinds`` (e.g. :class:`~levyecf.mechanisms.ShiftFamily`).
    grid : UGrid, optional
        Frequencies; default is a symmetric geometric ladder.
    weighting : {"two-stage", "identity", "fixed"}
    """

    def __init__(self, noise=None, free=None, family=None, grid=None, weighting="two-stage",
                 K=None, bounds=None, n_starts=5, random_state=0):
        self.noise = noise
        self.free = free
        self.family = family
        self.grid = grid
        self.weighting = weighting
        self.K = K
        self.bounds = bounds
        self.n_starts = n_starts
        self.random_state = random_state

    def fit(self, X, y=None):
        problem = self._problem(X, noise=self.noise, free_eta=self.free, family=self.family, K=self.K)
        result = estimate_iid_known_cf(problem)
        self.eta_ = result.estimate
        self.family_ = _iid_family(problem)
        if isinstance(self.family_, NoiseFamily):
            self.noise_ = self.family_.model(result.estimate)
        return self._store(result)

    def _hbar_on(self, X):
        x = check_series(X, 1)
        return core.ecf(x, self.grid_) - self.family_.cf(self.grid_.points[:, 0], self.eta_)

    def transform(self, X):
        """Per-sample scores ``exp(i u_k x_n) - phi(u_k; eta_hat)``, shape ``(N, M)``."""
        check_is_fitted(self, "result_")
        x = check_series(X, 1)
        u = self.grid_.points[:, 0]
        return core.iid_score_known_cf(x, u, lambda v: self.family_.cf(v, self.eta_))


class SimulatedECFEstimator(_ECFBase):
    """ECF estimator driven by a simulator ``xi = F(rho, eta)`` instead of a c.f.

    ``random_state`` seeds the common random numbers ``rho``.
    """

    def __init__(self, mechanism=None, grid=None, weighting="two-stage", K=None, bounds=None,
                 n_sim=None, n_starts=5, random_state=0):
        self.mechanism = mechanism
        self.grid = grid
        self.weighting = weighting
        self.K = K
        self.bounds = bounds
        self.n_sim = n_sim
        self.n_starts = n_starts
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.mechanism is None:
            raise ConfigError("SimulatedECFEstimator needs a mechanism")
        problem = self._problem(X, mechanism=self.mechanism, n_sim=self.n_sim, K=self.K)
        result = estimate_iid_simulated(problem)
        self.eta_ = result.estimate
        n_sim = result.n_obs if self.n_sim is None else self.n_sim
        self.rho_ = self.mechanism.draw(np.random.default_rng(self.random_state), n_sim)
        return self._store(result)

    def _hbar_on(self, X):
        x = check_series(X, 1)
        return core.ecf(x, self.grid_) - core.ecf(self.mechanism.apply(self.rho_, self.eta_), self.grid_)


class _BlockEstimator(_ECFBase):
    def _block_hbar(self, X):
        problem = dataclass_replace_data(self.problem_, X)
        if self.result_.estimator == "joint":
            hbar, _, _ = joint_objective(problem)
        else:
            hbar, _, _ = dynamics_objective(problem)
        return hbar(self.result_.estimate)

    def _hbar_on(self, X):
        return self._block_hbar(X)

    def transform(self, X):
        """Per-block output-error scores at the fitted parameters, shape ``(N, M)``."""
        check_is_fitted(self, "result_")
        problem = dataclass_replace_data(self.problem_, X)
        if self.result_.estimator == "joint":
            _, _, obj = joint_objective(problem)
            k = obj.free_theta.size
            sim = obj.sim_blocks(self.result_.estimate[:k], self.result_.estimate[k:])
        else:
            _, _, obj = dynamics_objective(problem)
            sim = obj.sim_blocks(self.result_.estimate)
        n = min(obj.N, sim.shape[0])
        return core.simulated_score(obj.blocks[:n], sim[:n], self.grid_.points)


def dataclass_replace_data(problem, X):
    return _replace(problem, data=X, grid=problem.grid)


class ECFDynamicsEstimator(_BlockEstimator):
    """Output-error ECF identification of ``A(theta, q^-1)`` with known noise law.

    Zeros of the fitted system are unrestricted, so non-minimum-phase
    systems are identifiable when the noise is non-Gaussian.
    """

    def __init__(self, system=None, noise=None, r=2, free=None, grid=None, weighting="two-stage",
                 K=None, bounds=None, n_sim=None, n_starts=5, random_state=0, warmup=None):
        self.system = system
        self.noise = noise
        self.r = r
        self.free = free
        self.grid = grid
        self.weighting = weighting
        self.K = K
        self.bounds = bounds
        self.n_sim = n_sim
        self.n_starts = n_starts
        self.random_state = random_state
        self.warmup = warmup

    def fit(self, X, y=None):
        problem = self._problem(X, system=self.system, noise=self.noise, r=self.r,
                                free_theta=self.free, n_sim=self.n_sim, K=self.K, warmup=self.warmup)
        result = estimate_dynamics(problem)
        self.problem_ = _replace(problem, grid=result.grid, data=None)
        _, _, obj = dynamics_objective(_replace(self.problem_, data=X))
        self.theta_ = obj.theta_full(result.estimate)
        self.system_ = obj.system_at(result.estimate)
        self.covariance_longrun_ = result.covariance_longrun
        return self._store(result)


class ECFJointEstimator(_BlockEstimator):
    """Joint output-error ECF fit of system and noise parameters (experimental)."""

    def __init__(self, system=None, noise=None, r=2, free_theta=None, free_eta=None, grid=None,
                 weighting="two-stage", K=None, bounds=None, n_sim=None, n_starts=5,
                 random_state=0, warmup=None):
        self.system = system
        self.noise = noise
        self.r = r
        self.free_theta = free_theta
        self.free_eta = free_eta
        self.grid = grid
        self.weighting = weighting
        self.K = K
        self.bounds = bounds
        self.n_sim = n_sim
        self.n_starts = n_starts
        self.random_state = random_state
        self.warmup = warmup

    def fit(self, X, y=None):
        problem = self._problem(X, system=self.system, noise=self.noise, r=self.r,
                                free_theta=self.free_theta, free_eta=self.free_eta,
                                n_sim=self.n_sim, K=self.K, warmup=self.warmup)
        result = estimate_joint(problem)
        self.problem_ = _replace(problem, grid=result.grid, data=None)
        _, _, obj = joint_objective(_replace(self.problem_, data=X))
        k = obj.free_theta.size
        self.theta_ = obj.theta_full(result.estimate[:k])
        self.eta_ = result.estimate[k:]
        self.system_ = obj.system_at(result.estimate[:k])
        self.noise_ = obj.noise_at(result.estimate[k:])
        return self._store(result)
