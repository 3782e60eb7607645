"""Scores, covariance matrices, the block joint c.f. and the quadratic cost.

Matrix conventions
------------------
Scores are stored as an ``(N, M)`` complex array. Covariances are
``E[h h^*]``, i.e. entry ``(k, l)`` is ``E[h_k conj(h_l)]``, which equals
``phi(u_k - u_l) - phi(u_k) phi(-u_l)`` for the models considered here.

Asymptotic covariances come out real only when the frequency grid is
closed under negation (``u`` and ``-u`` both present); the default grids
are built that way.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import linalg

from .exceptions import ConfigError, IdentifiabilityError
from .levy import NoiseModel
from .systems import DecayCertificate, SystemModel, convolve_u, impulse_response

__all__ = [
    "UGrid",
    "ScoreSet",
    "WeightMatrix",
    "JointCF",
    "Sensitivity",
    "ecf",
    "iid_score_known_cf",
    "simulated_score",
    "average_scores",
    "theory_cov_C",
    "theory_cov_Lambda",
    "joint_cf",
    "weighted_cost",
    "sensitivity_matrix",
    "asymptotic_cov",
    "sandwich_cov",
    "longrun_cov",
    "default_scalar_grid",
    "default_block_grid",
]


# grids -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UGrid:
    """``M`` distinct, nonzero frequency vectors in ``R^r``."""

    points: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ConfigError("grid.points must be a non-empty (M, r) array")
        if not np.all(np.isfinite(pts)):
            raise ConfigError("grid.points must be finite")
        if np.any(np.all(pts == 0, axis=1)):
            raise ConfigError("grid.points: the zero vector gives an identically zero score")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ConfigError("grid.points must be pairwise distinct")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def r(self) -> int:
        return self.points.shape[1]

    @property
    def is_symmetric(self) -> bool:
        """True when the grid is closed under ``u -> -u``."""
        a = np.unique(self.points, axis=0)
        b = np.unique(-self.points, axis=0)
        return a.shape == b.shape and np.array_equal(a, b)

    @classmethod
    def symmetric(cls, half_points, seed=None) -> "UGrid":
        half = np.asarray(half_points, dtype=float)
        if half.ndim == 1:
            half = half[:, None]
        return cls(np.concatenate([half, -half]), seed)

    def differences(self) -> np.ndarray:
        """``(M, M, r)`` array of ``u_k - u_l``."""
        return self.points[:, None, :] - self.points[None, :, :]

    def to_dict(self) -> dict:
        out = {"points": self.points.tolist()}
        if self.seed is not None:
            out["seed"] = int(self.seed)
        return out

    @classmethod
    def from_dict(cls, config: dict) -> "UGrid":
        if "points" not in config:
            raise ConfigError("grid.points is required")
        return cls(config["points"], config.get("seed"))

    def __eq__(self, other):
        return isinstance(other, UGrid) and np.array_equal(self.points, other.points)

    def __repr__(self):
        return f"UGrid(M={self.M}, r={self.r})"


def _first_crossing(modulus: Callable[[float], float], target: float) -> float:
    """Smallest positive scale where ``modulus`` drops to ``target``.

    Lattice laws may never get that low; the minimum over the first dip is
    used instead.
    """
    scan = np.geomspace(1e-3, 1e3, 1201)
    values = np.array([modulus(c) for c in scan])
    below = np.nonzero(values <= target)[0]
    if below.size:
        i = below[0]
        if i == 0:
            return float(scan[0])
        lo, hi = scan[i - 1], scan[i]
        for _ in range(60):
            mid = math.sqrt(lo * hi)
            if modulus(mid) <= target:
                hi = mid
            else:
                lo = mid
        return float(hi)
    dipped = np.nonzero(values < 1 - 1e-3)[0]
    if not dipped.size:
        return float(scan[-1])
    back = np.nonzero((values > 1 - 1e-6) & (np.arange(scan.size) > dipped[0]))[0]
    stop = back[0] if back.size else scan.size
    return float(scan[np.argmin(values[:stop])])


def default_scalar_grid(phi: Callable, n_levels: int = 4, target: float = 0.1) -> UGrid:
    """Symmetric geometric ladder ``{+-c 2^-j, j < n_levels}``, ``|phi(c)| ~ target``."""
    c = _first_crossing(lambda s: float(abs(phi(np.array(s)))), target)
    ladder = c * 2.0 ** -np.arange(n_levels)
    return UGrid.symmetric(ladder[::-1])


def default_block_grid(r: int, n_pairs: int, u_max: float, seed: int = 0) -> UGrid:
    """``n_pairs`` uniform vectors on ``[-u_max, u_max]^r`` plus their negatives."""
    rng = np.random.default_rng(seed)
    half = rng.uniform(-u_max, u_max, size=(n_pairs, r))
    return UGrid.symmetric(half, seed)


# scores ------------------------------------------------------------------

def ecf(x, grid: UGrid) -> np.ndarray:
    """Empirical c.f. of samples (``r = 1``) or blocks at every grid point."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        arg = np.multiply.outer(grid.points[:, 0], x)
    else:
        arg = grid.points @ x.T
    # (M, N) layout keeps the reduction contiguous (pairwise summation)
    return np.cos(arg).mean(axis=1) + 1j * np.sin(arg).mean(axis=1)


def iid_score_known_cf(sample, u, phi: Callable):
    """``exp(i u x) - phi(u)``; broadcasts to ``(N, M)`` for array inputs."""
    sample = np.asarray(sample, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.exp(1j * np.multiply.outer(sample, u)) - phi(u)


def simulated_score(real_block, sim_block, u):
    """Output-error score ``exp(i u'y) - exp(i u'y(theta))``.

    Blocks have shape ``(..., r)``; ``u`` is an r-vector or an ``(M, r)``
    grid, in which case a trailing axis of length M is added.
    """
    real_block = np.asarray(real_block, dtype=float)
    sim_block = np.asarray(sim_block, dtype=float)
    u = np.asarray(u, dtype=float)
    r = u.shape[-1]
    if real_block.shape[-1] != r or sim_block.shape[-1] != r:
        raise ConfigError(f"block length {real_block.shape[-1]}/{sim_block.shape[-1]} does not "
                          f"match u of length {r}")
    return np.exp(1j * (real_block @ u.T)) - np.exp(1j * (sim_block @ u.T))


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Per-sample scores ``values[n, k]`` and their average."""

    values: np.ndarray

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    @property
    def average(self) -> np.ndarray:
        v = np.ascontiguousarray(self.values.T)
        return v.mean(axis=1)

    def covariance(self, center: bool = True) -> np.ndarray:
        """Empirical ``E[h h^*]`` (entry ``(k, l)`` is ``mean h_k conj(h_l)``)."""
        v = self.values - self.average if center else self.values
        return (v.T @ v.conj()) / self.N


def average_scores(scores) -> ScoreSet:
    values = np.asarray(scores, dtype=complex)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2 or values.shape[0] == 0:
        raise ConfigError("need at least one score per frequency (N >= 1)")
    return ScoreSet(values)


# weighting ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Hermitian PSD weighting ``K`` with ridge ``eps`` used for inversion.

    ``eps`` defaults to ``1e-10 trace(K) / M``.
    """

    K: np.ndarray
    eps: float | None = None
    neg_tol: float = 1e-8
    _chol: np.ndarray | None = field(init=False, repr=False)

    def __post_init__(self):
        K = np.array(self.K, dtype=complex)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ConfigError("weighting matrix must be square")
        if not np.all(np.isfinite(K)):
            raise ConfigError("weighting matrix must be finite")
        scale = max(np.abs(K).max(), 1e-300)
        if np.abs(K - K.conj().T).max() > 1e-8 * scale:
            raise ConfigError("weighting matrix must be Hermitian")
        K = 0.5 * (K + K.conj().T)
        M = K.shape[0]
        eig = np.linalg.eigvalsh(K)
        if eig[0] < -self.neg_tol * max(abs(eig[-1]), 1e-300):
            raise ConfigError(f"weighting matrix has a negative eigenvalue {eig[0]:.3g}")
        eps = self.eps
        if eps is None:
            eps = 1e-10 * float(np.trace(K).real) / M
        if eps < 0:
            raise ConfigError("regularization eps must be >= 0")
        reg = K + eps * np.eye(M)
        try:
            chol = linalg.cholesky(reg, lower=True)
        except linalg.LinAlgError:
            chol = None  # representable, but inversion raises
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "eps", float(eps))
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def identity(cls, M: int) -> "WeightMatrix":
        return cls(np.eye(M), eps=0.0)

    @property
    def M(self) -> int:
        return self.K.shape[0]

    @property
    def regularized(self) -> np.ndarray:
        return self.K + self.eps * np.eye(self.M)

    def _factor(self):
        if self._chol is None:
            raise ConfigError("weighting matrix is singular; use eps > 0")
        return self._chol

    def whiten(self, x):
        """``L^-1 x`` where ``K + eps I = L L^*``."""
        return linalg.solve_triangular(self._factor(), x, lower=True)

    def solve(self, x):
        return linalg.cho_solve((self._factor(), True), x)

    def to_dict(self) -> dict:
        return {"real": self.K.real.tolist(), "imag": self.K.imag.tolist(), "eps": self.eps}


def weighted_cost(scores, K: WeightMatrix) -> float:
    """``hbar^* (K + eps I)^-1 hbar``; accepts a :class:`ScoreSet` or ``hbar``."""
    hbar = scores.average if isinstance(scores, ScoreSet) else np.asarray(scores, dtype=complex)
    z = K.whiten(hbar)
    return float(np.vdot(z, z).real)


# covariance formulas -----------------------------------------------------

def theory_cov_C(phi: Callable, grid: UGrid) -> WeightMatrix:
    """``C_kl = phi(u_k - u_l) - phi(u_k) phi(-u_l)`` for a scalar grid."""
    if grid.r != 1:
        raise ConfigError("theory_cov_C needs a scalar grid (r = 1)")
    u = grid.points[:, 0]
    diff = u[:, None] - u[None, :]
    C = phi(diff) - np.outer(phi(u), phi(-u))
    return WeightMatrix(0.5 * (C + C.conj().T))


def theory_cov_Lambda(joint_phi: Callable, grid: UGrid, simulated: bool = False) -> WeightMatrix:
    """Block version of :func:`theory_cov_C`; ``simulated`` returns ``2 Lambda``.

    ``joint_phi`` maps an array of r-vectors ``(..., r)`` to complex values.
    """
    pts = grid.points
    L = joint_phi(grid.differences()) - np.outer(joint_phi(pts), joint_phi(-pts))
    L = 0.5 * (L + L.conj().T)
    return WeightMatrix(2.0 * L if simulated else L)


class JointCF:
    """Joint c.f. of ``r``-blocks of ``A(theta) dZ(eta)`` as a certified finite product.

    ``phi(u) = prod_{k>=1} phi_dZ(v_k)`` with ``v = h * u``. The product is
    cut at ``K`` factors, where the Lyapunov tail bound on ``|v_k|``
    combined with ``|log phi_dZ(v)| <= sum c |v|^p`` certifies
    ``|phi - phi_K| <= exp(S) - 1 < tol``.
    """

    def __init__(self, sys: SystemModel, noise: NoiseModel, tol: float = 1e-12, max_terms: int = 1_000_000):
        if not tol > 0:
            raise ConfigError("joint_cf tolerance must be > 0")
        self.sys = sys
        self.noise = noise
        self.tol = float(tol)
        self.max_terms = int(max_terms)
        self.cert = DecayCertificate.for_system(sys)
        self.terms = noise.log_cf_bound_terms()
        self._h = impulse_response(sys, 64)
        self.last_terms = 0

    def _ir(self, K):
        if self._h.size < K:
            self._h = impulse_response(self.sys, max(K, 2 * self._h.size))
        return self._h[:K]

    def _tail_state(self, u, K):
        """State ``x`` with ``v_{K+1+m} = C A^m x`` (valid for ``K >= r``)."""
        sys = self.sys
        n, r = sys.state_dim, u.shape[-1]
        if n == 0:
            return np.zeros(u.shape[:-1] + (0,))
        # v_k = C A^{k-r-1} w for k > r, w = sum_j u_j A^{r-j} B
        basis = np.empty((r, n))
        x = np.array(sys.B, dtype=float)
        for j in range(r, 0, -1):
            basis[j - 1] = x
            x = sys.A @ x
        w = u @ basis
        return w @ np.linalg.matrix_power(sys.A, K - r).T

    def remainder_bound(self, u, K) -> np.ndarray:
        x = self._tail_state(u, K)
        s = sum(c * self.cert.tail_sum(x, p) for c, p in self.terms)
        with np.errstate(over="ignore"):  # an infinite bound just forces a longer product
            return np.expm1(s)

    def truncation(self, u) -> int:
        u = np.asarray(u, dtype=float)
        r = u.shape[-1]
        K = r + self.sys.state_dim
        flat = u.reshape(-1, r)
        while True:
            if np.all(self.remainder_bound(flat, K) < self.tol):
                return K
            if K >= self.max_terms:
                raise AssertionError("joint c.f. tail bound failed to converge")
            K *= 2

    def __call__(self, u, K: int | None = None):
        u = np.asarray(u, dtype=float)
        if u.ndim == 0:
            u = u[None]
        r = u.shape[-1]
        flat = u.reshape(-1, r)
        if K is None:
            K = self.truncation(flat)
        self.last_terms = K
        v = convolve_u(self._ir(K), flat, K)
        log_phi = self.noise.log_char_fn(v).sum(axis=-1)
        return np.exp(log_phi).reshape(u.shape[:-1])


def joint_cf(sys: SystemModel, noise: NoiseModel, u, tol: float = 1e-12, return_terms: bool = False):
    """Joint c.f. of a block at the r-vector(s) ``u``; optionally the factor count used."""
    jcf = JointCF(sys, noise, tol)
    value = jcf(u)
    if return_terms:
        return value, jcf.last_terms
    return value


def longrun_cov(joint_phi: Callable, grid: UGrid, max_lag: int, simulated: bool = False) -> np.ndarray:
    """Long-run covariance ``sum_j Gamma_j`` of overlapping-block scores.

    ``Gamma_j[k, l] = Cov(exp(i u_k' Y_{n+j}), exp(i u_l' Y_n))``; the pair of
    blocks is one linear functional of an extended block of length
    ``r + j``, so every term is a joint c.f. value. Lags beyond ``max_lag``
    are dropped (exact for MA structures with ``max_lag >= r + q - 1``).
    """
    pts = grid.points
    M, r = pts.shape
    phi = joint_phi(pts)
    total = joint_phi(grid.differences()) - np.outer(phi, phi.conj())
    for lag in range(1, int(max_lag) + 1):
        ext = np.zeros((M, M, r + lag))
        ext[:, :, :r] += pts[:, None, :]
        ext[:, :, lag:] -= pts[None, :, :]
        gamma = joint_phi(ext) - np.outer(phi, phi.conj())
        total = total + gamma + gamma.conj().T
    total = 0.5 * (total + total.conj().T)
    return 2.0 * total if simulated else total


# sensitivities and asymptotic covariances --------------------------------

class Sensitivity(NamedTuple):
    matrix: np.ndarray
    richardson_error: float


def sensitivity_matrix(phi_family: Callable, grid: UGrid, at, step: float = 1e-5) -> Sensitivity:
    """Rows ``-d phi(u_k; p) / dp`` at ``p = at`` by central differences.

    ``phi_family(points, params)`` returns the c.f. at each grid point. The
    step for parameter ``i`` is ``step * max(1, |at_i|)``; the returned
    ``richardson_error`` is the largest gap between full- and half-step
    derivatives.
    """
    if not step > 0:
        raise ConfigError("finite-difference step must be > 0")
    at = np.atleast_1d(np.asarray(at, dtype=float))
    pts = grid.points

    def evaluate(p):
        try:
            value = np.asarray(phi_family(pts, p), dtype=complex)
        except Exception as exc:
            raise ConfigError(f"c.f. evaluation failed inside the difference stencil at {p}: {exc}") from exc
        if not np.all(np.isfinite(value)):
            raise ConfigError(f"c.f. evaluation is not finite inside the difference stencil at {p}")
        return value

    H = np.empty((grid.M, at.size), dtype=complex)
    err = 0.0
    for i in range(at.size):
        hs = step * max(1.0, abs(at[i]))
        e = np.zeros(at.size)
        e[i] = 1.0
        full = (evaluate(at + hs * e) - evaluate(at - hs * e)) / (2 * hs)
        half = (evaluate(at + 0.5 * hs * e) - evaluate(at - 0.5 * hs * e)) / hs
        H[:, i] = -full
        err = max(err, float(np.abs(full - half).max()))
    return Sensitivity(H, err)


def _hermitian_inverse(A, what):
    A = 0.5 * (A + A.conj().T)
    if np.abs(A.imag).max() > 1e-8 * max(np.abs(A).max(), 1e-300):
        raise ConfigError(f"{what} has a non-negligible imaginary part; "
                          "use a grid closed under u -> -u")
    return np.linalg.inv(A.real)


def _check_rank(Hw, rtol=1e-6):
    """Raise when the whitened sensitivity loses column rank."""
    stacked = np.vstack([Hw.real, Hw.imag])
    _, s, vt = np.linalg.svd(stacked, full_matrices=False)
    if s.size == 0 or s[-1] <= rtol * s[0]:
        direction = vt[-1] if s.size else None
        raise IdentifiabilityError(
            f"sensitivity matrix is rank deficient (singular values {s.tolist()}); "
            f"unidentified direction {None if direction is None else np.round(direction, 6).tolist()}",
            direction)


def asymptotic_cov(Hmat, Lambda: WeightMatrix, factor: float = 1.0) -> np.ndarray:
    """``factor * (H^* Lambda^-1 H)^-1`` as a real symmetric matrix."""
    H = np.asarray(Hmat, dtype=complex)
    if H.ndim == 1:
        H = H[:, None]
    Hw = Lambda.whiten(H)
    _check_rank(Hw)
    info = Hw.conj().T @ Hw
    cov = factor * _hermitian_inverse(info, "H^* Lambda^-1 H")
    return 0.5 * (cov + cov.T)


def sandwich_cov(Hmat, K: WeightMatrix, Omega) -> np.ndarray:
    """``(H^*K^-1H)^-1 H^*K^-1 Omega K^-1 H (H^*K^-1H)^-1`` (real part)."""
    H = np.asarray(Hmat, dtype=complex)
    if H.ndim == 1:
        H = H[:, None]
    Omega = np.asarray(Omega, dtype=complex)
    Hw = K.whiten(H)
    _check_rank(Hw)
    bread = _hermitian_inverse(Hw.conj().T @ Hw, "H^* K^-1 H")
    KH = K.solve(H)
    meat = KH.conj().T @ Omega @ KH
    meat = 0.5 * (meat + meat.conj().T)
    if np.abs(meat.imag).max() > 1e-8 * max(np.abs(meat).max(), 1e-300):
        raise ConfigError("sandwich filling is complex; use a grid closed under u -> -u")
    cov = bread @ meat.real @ bread
    return 0.5 * (cov + cov.T)
