"""Bounded multistart minimization of the (deterministic, CRN) ECF cost.

Each start runs a compass pattern search and then a finite-difference
Gauss-Newton polish (``scipy.optimize.least_squares``) on stacked real
residuals whose squared norm is the cost. The lowest final cost wins.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .exceptions import ConfigError, ConvergenceError

__all__ = ["minimize_cost", "OptimizeResult", "StartTrace", "BoundaryWarning", "check_box"]


class BoundaryWarning(UserWarning):
    """The optimum lies on the boundary of the search box."""


@dataclass
class StartTrace:
    x0: list
    x: list
    fun: float
    n_evals: int
    iterations: int
    converged: bool
    polished: bool
    history: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    on_boundary: bool
    n_evals: int
    starts: list

    @property
    def iterations(self) -> int:
        return sum(s.iterations for s in self.starts)

    @property
    def cost_history(self) -> list:
        best = min(self.starts, key=lambda s: s.fun)
        return best.history

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "fun": self.fun, "grad_norm": self.grad_norm,
                "on_boundary": self.on_boundary, "n_evals": self.n_evals,
                "iterations": self.iterations, "starts": [s.to_dict() for s in self.starts]}


def check_box(bounds) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ConfigError("bounds must be a sequence of (low, high) pairs")
    lo, hi = b[:, 0].copy(), b[:, 1].copy()
    if not (np.all(np.isfinite(b)) and np.all(lo < hi)):
        raise ConfigError(f"bounds must be finite with low < high, got {b.tolist()}")
    return lo, hi


class _Counted:
    def __init__(self, fn):
        self.fn = fn
        self.n = 0

    def __call__(self, x):
        self.n += 1
        try:
            value = float(self.fn(x))
        except (ArithmeticError, ValueError):
            return np.inf
        return value if np.isfinite(value) else np.inf


def _pattern_search(f, x0, lo, hi, step0, tol, max_iter):
    x = x0.copy()
    fx = f(x)
    step = step0.copy()
    history = [fx]
    it = 0
    while it < max_iter and np.any(step > tol * (hi - lo)):
        it += 1
        improved = False
        for i in range(x.size):
            for sign in (1.0, -1.0):
                trial = x.copy()
                trial[i] = np.clip(x[i] + sign * step[i], lo[i], hi[i])
                if trial[i] == x[i]:
                    continue
                ft = f(trial)
                if ft < fx:
                    x, fx, improved = trial, ft, True
                    break
        if not improved:
            step *= 0.5
        history.append(fx)
    converged = not np.any(step > tol * (hi - lo))
    return x, fx, it, converged, history


def _fd_gradient(f, x, lo, hi, rel=1e-6):
    g = np.zeros(x.size)
    for i in range(x.size):
        hs = rel * max(1.0, abs(x[i]))
        up, dn = min(x[i] + hs, hi[i]), max(x[i] - hs, lo[i])
        xu, xd = x.copy(), x.copy()
        xu[i], xd[i] = up, dn
        g[i] = (f(xu) - f(xd)) / (up - dn)
    return g


def _projected_norm(g, x, lo, hi, atol):
    g = g.copy()
    g[(x <= lo + atol) & (g > 0)] = 0.0
    g[(x >= hi - atol) & (g < 0)] = 0.0
    return float(np.linalg.norm(g))


def minimize_cost(cost: Callable, bounds, start=None, *, residuals: Callable | None = None,
                  n_starts: int = 5, seed: int = 0, tol: float = 1e-7, max_iter: int = 500,
                  polish: bool = True) -> OptimizeResult:
    """Minimize ``cost`` over the box ``bounds``.

    Parameters
    ----------
    cost : callable
        ``x -> float``; non-finite values and arithmetic errors count as
        infeasible.
    bounds : sequence of (low, high)
        Compact search box.
    start : array_like, optional
        First starting point; the remaining ``n_starts - 1`` come from a
        Latin hypercube with ``seed``.
    residuals : callable, optional
        ``x -> real vector`` with ``sum(residuals(x)**2) == cost(x)``; enables
        the Gauss-Newton polish.

    Returns
    -------
    OptimizeResult
        Best point over all starts, projected FD gradient norm there and a
        per-start trace.
    """
    lo, hi = check_box(bounds)
    if int(n_starts) != n_starts or n_starts < 1:
        raise ConfigError("n_starts must be a positive integer")
    starts = []
    if start is not None:
        x0 = np.atleast_1d(np.asarray(start, dtype=float))
        if x0.shape != lo.shape:
            raise ConfigError(f"start has {x0.size} entries, bounds have {lo.size}")
        starts.append(np.clip(x0, lo, hi))
    n_lhs = n_starts - len(starts)
    if n_lhs > 0:
        sampler = qmc.LatinHypercube(d=lo.size, seed=np.random.default_rng(seed))
        starts.extend(qmc.scale(sampler.random(n_lhs), lo, hi))

    f = _Counted(cost)
    traces = []
    best_x, best_f = None, np.inf
    for x0 in starts:
        n_before = f.n
        x, fx, it, converged, history = _pattern_search(
            f, np.asarray(x0, dtype=float), lo, hi, 0.25 * (hi - lo), tol, max_iter)
        polished = False
        if polish and residuals is not None and np.isfinite(fx):
            x, fx, polished = _polish(f, residuals, x, fx, lo, hi)
        if polished:
            history.append(fx)
        traces.append(StartTrace(np.asarray(x0).tolist(), x.tolist(), fx, f.n - n_before,
                                 it, bool(converged and np.isfinite(fx)), polished, history))
        if fx < best_f:
            best_x, best_f = x, fx

    ok = [t for t in traces if t.converged]
    if not ok:
        raise ConvergenceError("optimizer failed to converge from every start", traces)
    best = min(ok, key=lambda t: t.fun)
    best_x, best_f = np.asarray(best.x), best.fun

    atol = 1e-9 * (hi - lo)
    on_boundary = bool(np.any(best_x <= lo + atol) or np.any(best_x >= hi - atol))
    grad = _fd_gradient(f, best_x, lo, hi)
    gnorm = _projected_norm(grad, best_x, lo, hi, atol) if np.all(np.isfinite(grad)) else np.inf
    if on_boundary:
        warnings.warn(f"optimum {best_x.tolist()} lies on the search-box boundary", BoundaryWarning,
                      stacklevel=2)
    return OptimizeResult(best_x, float(best_f), gnorm, on_boundary, f.n, traces)


def _polish(f, residuals, x, fx, lo, hi):
    # least_squares needs a strictly interior start
    span = hi - lo
    x_in = np.clip(x, lo + 1e-10 * span, hi - 1e-10 * span)

    def res(z):
        r = np.asarray(residuals(z), dtype=float)
        if not np.all(np.isfinite(r)):
            raise FloatingPointError("non-finite residual")
        return r

    try:
        with np.errstate(all="ignore"):
            sol = optimize.least_squares(res, x_in, bounds=(lo, hi), method="trf",
                                         xtol=1e-12, ftol=1e-14, gtol=1e-14, max_nfev=200)
    except (ArithmeticError, ValueError):
        return x, fx, False
    f_new = f(sol.x)
    if f_new < fx:
        return np.asarray(sol.x, dtype=float), f_new, True
    return x, fx, False
