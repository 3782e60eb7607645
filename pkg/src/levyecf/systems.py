"""Stable rational filters ``A(theta, q^-1)`` and the block machinery.

Supported structures (``theta`` layout in brackets):

``fir``   ``b0 + b1 q^-1 + ... + bq q^-q``                 [b0, ..., bq]
``ma``    monic FIR ``1 + b1 q^-1 + ... + bq q^-q``         [b1, ..., bq]
``arma``  ``(1 + sum b_j q^-j) / (1 - sum a_i q^-i)``       [a1..ap, b1..bq]
``ss``    ``D + C (qI - A)^-1 B`` of dimension n            [vec(A), B, C, D]

Only the poles are checked. Zeros may lie anywhere, so non-minimum-phase
systems are accepted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg, signal

from .exceptions import ConfigError, StabilityError

__all__ = [
    "SystemModel",
    "BlockSeries",
    "build_system",
    "impulse_response",
    "impulse_tail_bound",
    "apply_filter",
    "convolve_u",
    "make_blocks",
    "DecayCertificate",
]

STRUCTURES = ("fir", "ma", "arma", "ss")


def _theta_size(structure, order):
    if structure == "fir":
        return int(order) + 1
    if structure == "ma":
        return int(order)
    if structure == "arma":
        return int(order[0]) + int(order[1])
    if structure == "ss":
        n = int(order)
        return n * n + 2 * n + 1
    raise ConfigError(f"system.structure: unknown structure {structure!r}; expected one of {STRUCTURES}")


class SystemModel:
    """Validated, immutable single-input single-output filter.

    Attributes
    ----------
    structure, order, theta
        The parameterization.
    A, B, C, D
        State-space realization (controller canonical form for fir/ma/arma).
    num, den
        Polynomial coefficients in ``q^-1`` for :func:`scipy.signal.lfilter`.
    """

    def __init__(self, structure, theta, order=None, margin=1e-6):
        structure = str(structure).lower()
        theta = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
        if order is None:
            order = _infer_order(structure, theta)
        expected = _theta_size(structure, order)
        if theta.shape != (expected,):
            raise ConfigError(f"system.theta: {structure} of order {order} needs {expected} "
                              f"parameters, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise ConfigError("system.theta must be finite")
        if not margin >= 0:
            raise ConfigError("stability margin must be >= 0")
        theta.setflags(write=False)
        self.structure = structure
        self.order = tuple(int(o) for o in order) if structure == "arma" else int(order)
        self.theta = theta
        self.margin = float(margin)
        self.A, self.B, self.C, self.D, self.num, self.den = _realize(structure, self.order, theta)
        for arr in (self.A, self.B, self.C, self.num, self.den):
            arr.setflags(write=False)
        self.poles = np.linalg.eigvals(self.A) if self.A.size else np.zeros(0)
        self.spectral_radius = float(np.max(np.abs(self.poles))) if self.poles.size else 0.0
        if self.spectral_radius >= 1.0 - self.margin:
            moduli = np.sort(np.abs(self.poles))[::-1]
            raise StabilityError(
                f"unstable system: pole moduli {np.round(moduli, 6).tolist()} must be "
                f"< 1 - {self.margin:g}", moduli)

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def n_params(self) -> int:
        return self.theta.size

    def with_theta(self, theta) -> "SystemModel":
        return SystemModel(self.structure, theta, self.order, self.margin)

    def default_warmup(self, eps_tail: float = 1e-12) -> int:
        """Burn-in after which the impulse-response tail is below ``eps_tail``."""
        n = self.state_dim
        if self.spectral_radius == 0.0:
            return n
        return n + int(math.ceil(math.log(eps_tail) / math.log(self.spectral_radius)))

    def to_dict(self) -> dict:
        out = {"structure": self.structure, "theta": self.theta.tolist()}
        if self.structure in ("arma", "ss"):
            out["order"] = list(self.order) if self.structure == "arma" else self.order
        if self.margin != 1e-6:
            out["margin"] = self.margin
        return out

    @classmethod
    def from_dict(cls, config: dict) -> "SystemModel":
        config = dict(config)
        unknown = set(config) - {"structure", "theta", "order", "margin"}
        if unknown:
            raise ConfigError(f"system: unknown field(s) {sorted(unknown)}")
        if "structure" not in config or "theta" not in config:
            raise ConfigError("system: 'structure' and 'theta' are required")
        return cls(config["structure"], config["theta"], config.get("order"),
                   config.get("margin", 1e-6))

    def __repr__(self):
        return f"SystemModel({self.structure!r}, theta={self.theta.tolist()}, order={self.order})"

    def __eq__(self, other):
        return (isinstance(other, SystemModel) and self.structure == other.structure
                and self.order == other.order and np.array_equal(self.theta, other.theta)
                and self.margin == other.margin)

    def __hash__(self):
        return hash((self.structure, self.order, self.theta.tobytes(), self.margin))


def _infer_order(structure, theta):
    if structure == "fir":
        return theta.size - 1
    if structure == "ma":
        return theta.size
    if structure == "ss":
        # n^2 + 2n + 1 = (n + 1)^2
        n = int(round(math.sqrt(theta.size))) - 1
        if (n + 1) ** 2 != theta.size:
            raise ConfigError(f"system.theta: {theta.size} is not a valid state-space size")
        return n
    if structure == "arma":
        raise ConfigError("system.order: arma needs an explicit order [p_a, p_b]")
    raise ConfigError(f"system.structure: unknown structure {structure!r}; expected one of {STRUCTURES}")


def _shift_realization(coeffs_strict, den_tail):
    """Controller form of ``sum c_j z^-j / (1 - sum a_i z^-i)``."""
    n = max(len(coeffs_strict), len(den_tail))
    a = np.zeros(n)
    a[:len(den_tail)] = den_tail
    c = np.zeros(n)
    c[:len(coeffs_strict)] = coeffs_strict
    A = np.zeros((n, n))
    if n:
        A[0, :] = a
        A[1:, :-1] = np.eye(n - 1)
    B = np.zeros(n)
    if n:
        B[0] = 1.0
    return A, B, c


def _realize(structure, order, theta):
    if structure in ("fir", "ma"):
        num = theta.copy() if structure == "fir" else np.concatenate([[1.0], theta])
        A, B, C = _shift_realization(num[1:], np.zeros(0))
        return A, B, C, float(num[0]), num, np.array([1.0])
    if structure == "arma":
        p_a, p_b = order
        a, b = theta[:p_a], theta[p_a:]
        n = max(p_a, p_b)
        a_pad = np.zeros(n)
        a_pad[:p_a] = a
        b_pad = np.zeros(n)
        b_pad[:p_b] = b
        A, B, C = _shift_realization(b_pad + a_pad, a)
        num = np.concatenate([[1.0], b])
        den = np.concatenate([[1.0], -a])
        return A, B, C, 1.0, num, den
    n = order
    A = theta[: n * n].reshape(n, n)
    B = theta[n * n: n * n + n]
    C = theta[n * n + n: n * n + 2 * n]
    D = float(theta[-1])
    if n == 0:
        return A, B, C, D, np.array([D]), np.array([1.0])
    num, den = signal.ss2tf(A, B[:, None], C[None, :], np.array([[D]]))
    return A, B, C, D, np.asarray(num[0], dtype=float), np.asarray(den, dtype=float)


def build_system(structure, theta, order=None, margin=1e-6) -> SystemModel:
    """Validate ``theta`` for ``structure`` and realize the filter."""
    return SystemModel(structure, theta, order, margin)


# impulse responses -------------------------------------------------------

def impulse_response(sys: SystemModel, L: int) -> np.ndarray:
    """Markov parameters ``h_0 .. h_L`` from the state-space realization."""
    if int(L) != L or L < 0:
        raise ConfigError(f"impulse response length must be >= 0, got {L}")
    L = int(L)
    out = np.zeros(L + 1)
    out[0] = sys.D
    x = np.array(sys.B, dtype=float)
    for lag in range(1, L + 1):
        if not x.size:
            break
        out[lag] = sys.C @ x
        x = sys.A @ x
    return out


@dataclass(frozen=True)
class DecayCertificate:
    """Lyapunov certificate for the free response ``x -> A x``.

    With ``Q - A'QA = I``, the quadratic form ``V(x) = x'Qx`` contracts by
    ``gamma = 1 - 1/lambda_max(Q)`` per step, so
    ``|C A^m x| <= ||C|| sqrt(V(x) / lambda_min(Q)) gamma^(m/2)``.
    """

    Q: np.ndarray
    gamma: float
    lam_min: float
    c_norm: float

    @classmethod
    def for_system(cls, sys: SystemModel) -> "DecayCertificate":
        n = sys.state_dim
        if n == 0:
            return cls(np.zeros((0, 0)), 0.0, 1.0, 0.0)
        Q = linalg.solve_discrete_lyapunov(sys.A.T, np.eye(n))
        Q = 0.5 * (Q + Q.T)
        eig = np.linalg.eigvalsh(Q)
        gamma = 1.0 - 1.0 / eig[-1]
        assert 0.0 <= gamma < 1.0, "stable realization must contract"
        return cls(Q, float(max(gamma, 0.0)), float(eig[0]), float(np.linalg.norm(sys.C)))

    def output_bound(self, x: np.ndarray) -> np.ndarray:
        """Bound on ``|C A^m x|`` at ``m = 0``; decays like ``gamma^(m/2)``.

        ``x`` may be a batch of states of shape ``(..., n)``.
        """
        if self.Q.size == 0:
            return np.zeros(np.shape(x)[:-1])
        v = np.einsum("...i,ij,...j->...", x, self.Q, x)
        return self.c_norm * np.sqrt(np.maximum(v, 0.0) / self.lam_min)

    def tail_sum(self, x: np.ndarray, power: float) -> np.ndarray:
        """Bound on ``sum_{m>=0} |C A^m x|**power``."""
        b0 = self.output_bound(x)
        return b0 ** power / (1.0 - self.gamma ** (0.5 * power))


def impulse_tail_bound(sys: SystemModel, L: int) -> float:
    """Certified bound on ``sum_{l>L} |h_l|``."""
    if sys.state_dim == 0:
        return 0.0
    cert = DecayCertificate.for_system(sys)
    x = np.linalg.matrix_power(sys.A, int(L)) @ sys.B
    return float(cert.tail_sum(x, 1.0))


# filtering ---------------------------------------------------------------

def apply_filter(sys: SystemModel, noise, warmup: int | None = None, n_out: int | None = None):
    """Causal filtering ``dy = A(q^-1) dZ`` along the last axis.

    The first ``warmup`` outputs are discarded to approximate the
    stationary regime; ``n_out`` (default: everything left) outputs remain.
    """
    noise = np.asarray(noise, dtype=float)
    if warmup is None:
        warmup = sys.default_warmup()
    warmup = int(warmup)
    if warmup < 0:
        raise ConfigError("warmup must be >= 0")
    length = noise.shape[-1]
    if n_out is None:
        n_out = length - warmup
    if n_out < 1 or length < warmup + n_out:
        raise ConfigError(f"input of length {length} is too short for warmup {warmup} "
                          f"and {n_out} outputs")
    x = noise[..., : warmup + n_out]
    if sys.den.size == 1:
        y = signal.lfilter(sys.num / sys.den[0], [1.0], x, axis=-1)
    else:
        y = signal.lfilter(sys.num, sys.den, x, axis=-1)
    return y[..., warmup:]


def convolve_u(h, u, K_max: int) -> np.ndarray:
    """``v_k = sum_{j=1}^r h_{k-j} u_j`` for ``k = 1 .. K_max`` (``h_l = 0`` for ``l < 0``).

    ``u`` may be a single r-vector or a batch of shape ``(B, r)``.
    """
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    K_max = int(K_max)
    hp = np.zeros(K_max)
    hp[: min(K_max, h.size)] = h[:K_max]
    r = u.shape[-1]
    # T[k-1, j-1] = h_{k-j}
    k = np.arange(1, K_max + 1)[:, None]
    j = np.arange(1, r + 1)[None, :]
    lag = k - j
    T = np.where(lag >= 0, hp[np.clip(lag, 0, K_max - 1)], 0.0)
    return u @ T.T


# blocks ------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSeries:
    """Sliding blocks; row ``i`` is ``(dy_{n-1}, ..., dy_{n-r})`` for ``n = r+1+i``."""

    r: int
    blocks: np.ndarray

    @property
    def N(self) -> int:
        return self.blocks.shape[0]


def make_blocks(series, r: int) -> BlockSeries:
    series = np.asarray(series, dtype=float)
    if series.ndim != 1:
        raise ConfigError("series must be one-dimensional")
    if int(r) != r or r < 1:
        raise ConfigError(f"block length r must be >= 1, got {r}")
    r = int(r)
    if series.size < r + 1:
        raise ConfigError(f"series of length {series.size} is too short for blocks of length {r}")
    windows = sliding_window_view(series[:-1], r)[:, ::-1]
    return BlockSeries(r, np.ascontiguousarray(windows))
