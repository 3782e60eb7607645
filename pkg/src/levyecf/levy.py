"""Parametric Levy noise families.

Each family evaluates its characteristic exponent ``psi`` (with
``E[exp(iuZ_t)] = exp(t psi(u))``), the c.f. of one increment over the
sampling interval ``h``, its Levy density, and samples i.i.d. increments.

Sampling is split in two steps so that estimators can reuse one random
stream across parameter values (common random numbers):

``draw_base(rng, n)``
    parameter-free uniforms / normals,
``from_base(base)``
    a deterministic, piecewise smooth map of those draws onto increments.

``sample(n, seed)`` is simply ``from_base(draw_base(default_rng(seed), n))``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy import special, stats

from .exceptions import ConfigError, UnsupportedSamplerError

__all__ = [
    "NoiseModel",
    "CompoundPoisson",
    "VarianceGamma",
    "AlphaStable",
    "CGMY",
    "Gaussian",
    "char_exponent",
    "char_fn_increment",
    "sample_increments",
    "levy_density",
    "mean_increment",
    "FAMILIES",
]


def _as_u(u):
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("characteristic function argument must be finite")
    return arr


def _seed_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class NoiseModel:
    """Base class of the noise families. Instances are immutable."""

    family: ClassVar[str] = ""
    # kind of each parameter: "positive", "nonneg", "real", "unit", "open2"
    param_kinds: ClassVar[dict] = {}
    samplable: ClassVar[bool] = True

    # -- parameter vector ------------------------------------------------
    @property
    def param_names(self) -> tuple:
        return tuple(self.param_kinds)

    @property
    def eta(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.param_names], dtype=float)

    def with_params(self, **values) -> "NoiseModel":
        unknown = set(values) - set(self.param_names) - {"h", "center"}
        if unknown:
            raise ConfigError(f"{self.family}: unknown parameter(s) {sorted(unknown)}")
        return dataclasses.replace(self, **{k: float(v) if k != "center" else v
                                            for k, v in values.items()})

    def with_eta(self, eta, names=None) -> "NoiseModel":
        names = self.param_names if names is None else tuple(names)
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        if eta.shape != (len(names),):
            raise ConfigError(f"expected {len(names)} parameter values, got {eta.shape}")
        return self.with_params(**dict(zip(names, eta)))

    def _check_common(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise ConfigError(f"sampling interval h must be > 0, got {self.h}")
        for name, kind in self.param_kinds.items():
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ConfigError(f"{self.family}.{name} must be finite, got {value}")
            if kind == "positive" and not value > 0:
                raise ConfigError(f"{self.family}.{name} must be > 0, got {value}")
            if kind == "nonneg" and not value >= 0:
                raise ConfigError(f"{self.family}.{name} must be >= 0, got {value}")
            if kind == "unit" and not 0 <= value <= 1:
                raise ConfigError(f"{self.family}.{name} must lie in [0, 1], got {value}")
            if kind == "open2" and not 0 < value < 2:
                raise ConfigError(f"{self.family}.{name} must lie in (0, 2), got {value}")

    # -- moments ---------------------------------------------------------
    def mean_rate(self) -> float:
        """E[Z_1] of the uncentered process."""
        raise NotImplementedError

    def variance_rate(self) -> float:
        """Var[Z_1]; ``inf`` for infinite-variance families."""
        raise NotImplementedError

    def mean_increment(self) -> float:
        """Analytic E[dZ] over one interval, 0 when ``center`` is set."""
        mean = self.h * self.mean_rate()
        return 0.0 if self.center else mean

    @property
    def is_finite_variation(self) -> bool:
        return True

    # -- characteristic function -----------------------------------------
    def _raw_exponent(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def char_exponent(self, u):
        """psi(u), mean corrected when ``center`` is set."""
        u = _as_u(u)
        psi = self._raw_exponent(u)
        if self.center:
            psi = psi - 1j * u * self.mean_rate()
        return psi

    def log_char_fn(self, u):
        return self.h * self.char_exponent(u)

    def char_fn(self, u):
        """c.f. of one increment, ``exp(h psi(u))``."""
        return np.exp(self.log_char_fn(u))

    def log_cf_bound_terms(self) -> list:
        """Pairs ``(c, p)`` with ``|h psi(v)| <= sum c |v|**p`` for all real v.

        For finite variance, ``|exp(ix) - 1 - ix| <= x**2 / 2`` gives
        ``|psi_centered(v)| <= Var[Z_1] v**2 / 2``.
        """
        var = self.variance_rate()
        terms = [(0.5 * self.h * var, 2.0)]
        if not self.center:
            mean = abs(self.mean_rate())
            if mean > 0:
                terms.append((self.h * mean, 1.0))
        return terms

    # -- Levy measure ----------------------------------------------------
    def levy_density(self, x):
        raise NotImplementedError(f"{self.family} has no Levy density implemented")

    # -- sampling --------------------------------------------------------
    def draw_base(self, rng, n: int) -> dict:
        raise UnsupportedSamplerError(f"{self.family} is a c.f.-only family; no sampler")

    def from_base(self, base: dict) -> np.ndarray:
        raise UnsupportedSamplerError(f"{self.family} is a c.f.-only family; no sampler")

    def sample(self, n: int, seed=None) -> np.ndarray:
        if not self.samplable:
            raise UnsupportedSamplerError(f"{self.family} is a c.f.-only family; no sampler")
        n = _check_count(n)
        return self.from_base(self.draw_base(_seed_rng(seed), n))

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        out = {"family": self.family}
        out.update({name: float(getattr(self, name)) for name in self.param_names})
        out["h"] = float(self.h)
        out["center"] = bool(self.center)
        return out

    @staticmethod
    def from_dict(config: dict) -> "NoiseModel":
        config = dict(config)
        family = config.pop("family", None)
        cls = FAMILIES.get(family)
        if cls is None:
            raise ConfigError(f"noise.family: unknown family {family!r}; "
                              f"expected one of {sorted(FAMILIES)}")
        return cls._from_fields(config)

    @classmethod
    def _from_fields(cls, fields: dict) -> "NoiseModel":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(fields) - names
        if unknown:
            raise ConfigError(f"noise: unknown field(s) {sorted(unknown)} for family {cls.family!r}")
        missing = [n for n in cls.param_kinds if n not in fields]
        if missing:
            raise ConfigError(f"noise: missing field(s) {missing} for family {cls.family!r}")
        return cls(**fields)


def _check_count(n) -> int:
    if isinstance(n, (bool, np.bool_)) or int(n) != n or n < 1:
        raise ConfigError(f"sample count must be a positive integer, got {n!r}")
    return int(n)


def _poisson_inverse(u: np.ndarray, mean: float) -> np.ndarray:
    """Inverse Poisson c.d.f. by table lookup (exact up to float cdf rounding)."""
    if mean == 0:
        return np.zeros(u.shape)
    top = int(mean + 12.0 * math.sqrt(mean) + 20)
    while stats.poisson.sf(top - 1, mean) > 1e-17:
        top *= 2
    cdf = stats.poisson.cdf(np.arange(top), mean)
    idx = np.searchsorted(cdf, u, side="left")
    return np.minimum(idx, top - 1).astype(float)


@dataclass(frozen=True)
class CompoundPoisson(NoiseModel):
    """Compound Poisson process with Gaussian or two-point jumps.

    Gaussian jumps use ``jump_mu``/``jump_sigma``; two-point jumps take
    ``jump_a`` with probability ``jump_p`` and ``jump_b`` otherwise.
    """

    rate: float = 1.0
    jump: str = "gaussian"
    jump_mu: float = 0.0
    jump_sigma: float = 1.0
    jump_a: float = 1.0
    jump_b: float = 0.0
    jump_p: float = 1.0
    h: float = 1.0
    center: bool = False

    family: ClassVar[str] = "compound_poisson"
    _kinds: ClassVar[dict] = {
        "gaussian": {"rate": "positive", "jump_mu": "real", "jump_sigma": "nonneg"},
        "two_point": {"rate": "positive", "jump_a": "real", "jump_b": "real", "jump_p": "unit"},
    }

    def __post_init__(self):
        if self.jump not in self._kinds:
            raise ConfigError(f"compound_poisson.jump must be one of {sorted(self._kinds)}, "
                              f"got {self.jump!r}")
        self._check_common()

    @property
    def param_kinds(self):
        return self._kinds[self.jump]

    def to_dict(self):
        out = super().to_dict()
        out["jump"] = self.jump
        return out

    @classmethod
    def _from_fields(cls, fields):
        jump = fields.get("jump", "gaussian")
        if jump not in cls._kinds:
            raise ConfigError(f"noise.jump: must be one of {sorted(cls._kinds)}, got {jump!r}")
        allowed = set(cls._kinds[jump]) | {"jump", "h", "center"}
        unknown = set(fields) - allowed
        if unknown:
            raise ConfigError(f"noise: unknown field(s) {sorted(unknown)} for {jump} jumps")
        missing = [n for n in cls._kinds[jump] if n not in fields]
        if missing:
            raise ConfigError(f"noise: missing field(s) {missing} for {jump} jumps")
        return cls(**fields)

    def jump_cf(self, u):
        u = _as_u(u)
        if self.jump == "gaussian":
            return np.exp(1j * u * self.jump_mu - 0.5 * (self.jump_sigma * u) ** 2)
        p = self.jump_p
        return p * np.exp(1j * u * self.jump_a) + (1 - p) * np.exp(1j * u * self.jump_b)

    def _jump_moments(self):
        if self.jump == "gaussian":
            return self.jump_mu, self.jump_mu ** 2 + self.jump_sigma ** 2
        p, a, b = self.jump_p, self.jump_a, self.jump_b
        return p * a + (1 - p) * b, p * a * a + (1 - p) * b * b

    def mean_rate(self):
        return self.rate * self._jump_moments()[0]

    def variance_rate(self):
        return self.rate * self._jump_moments()[1]

    def _raw_exponent(self, u):
        return self.rate * (self.jump_cf(u) - 1.0)

    def levy_density(self, x):
        """Absolutely continuous part of the Levy measure.

        Two-point jumps have no density; their point masses come from
        :meth:`levy_atoms`.
        """
        x = _nonzero(x)
        if self.jump == "gaussian":
            if self.jump_sigma == 0:
                return np.zeros_like(x)
            return self.rate * stats.norm.pdf(x, self.jump_mu, self.jump_sigma)
        return np.zeros_like(x)

    def levy_atoms(self) -> list:
        """Point masses ``(x, mass)`` of the Levy measure."""
        if self.jump == "gaussian":
            return [(self.jump_mu, self.rate)] if self.jump_sigma == 0 else []
        atoms = {}
        for x, w in ((self.jump_a, self.jump_p), (self.jump_b, 1 - self.jump_p)):
            if w > 0 and x != 0:
                atoms[x] = atoms.get(x, 0.0) + self.rate * w
        return sorted(atoms.items())

    def draw_base(self, rng, n):
        return {"count": rng.random(n), "jump": rng.random(n) if self.jump == "two_point"
                else rng.standard_normal(n)}

    def from_base(self, base):
        counts = _poisson_inverse(base["count"], self.rate * self.h)
        if self.jump == "gaussian":
            # a sum of k iid N(mu, s^2) jumps is exactly N(k mu, k s^2)
            x = counts * self.jump_mu + np.sqrt(counts) * self.jump_sigma * base["jump"]
        else:
            n_a = stats.binom.ppf(base["jump"], counts, self.jump_p)
            n_a = np.where(counts > 0, n_a, 0.0)
            x = n_a * self.jump_a + (counts - n_a) * self.jump_b
        if self.center:
            x = x - self.h * self.mean_rate()
        return x


@dataclass(frozen=True)
class VarianceGamma(NoiseModel):
    """Brownian motion with drift ``theta_d`` and volatility ``sigma``,
    time changed by a gamma process with unit mean rate and variance ``nu``.
    """

    sigma: float = 1.0
    nu: float = 1.0
    theta_d: float = 0.0
    h: float = 1.0
    center: bool = False

    family: ClassVar[str] = "vg"
    param_kinds: ClassVar[dict] = {"sigma": "positive", "nu": "positive", "theta_d": "real"}

    def __post_init__(self):
        self._check_common()

    def mean_rate(self):
        return self.theta_d

    def variance_rate(self):
        return self.sigma ** 2 + self.theta_d ** 2 * self.nu

    def _raw_exponent(self, u):
        # base has real part >= 1, so the principal log is continuous in u
        base = 1.0 - 1j * self.theta_d * self.nu * u + 0.5 * self.sigma ** 2 * self.nu * u ** 2
        return -np.log(base) / self.nu

    def tempering(self):
        """(C, G, M) of the equivalent Y = 0 tempered-stable Levy measure."""
        root = math.sqrt(0.25 * self.theta_d ** 2 * self.nu ** 2 + 0.5 * self.sigma ** 2 * self.nu)
        g = 1.0 / (root - 0.5 * self.theta_d * self.nu)
        m = 1.0 / (root + 0.5 * self.theta_d * self.nu)
        return 1.0 / self.nu, g, m

    def levy_density(self, x):
        x = _nonzero(x)
        c, g, m = self.tempering()
        return c * np.exp(np.where(x < 0, -g * np.abs(x), -m * x)) / np.abs(x)

    def draw_base(self, rng, n):
        return {"gamma": rng.random(n), "normal": rng.standard_normal(n)}

    def from_base(self, base):
        # gamma clock over h: mean h, variance nu*h; inverse c.d.f. keeps the
        # map smooth in (h, nu) for common-random-number estimation
        shape = self.h / self.nu
        g = special.gammaincinv(shape, base["gamma"]) * self.nu
        x = self.theta_d * g + self.sigma * np.sqrt(g) * base["normal"]
        if self.center:
            x = x - self.h * self.theta_d
        return x


@dataclass(frozen=True)
class AlphaStable(NoiseModel):
    """Stable process with Levy density ``C- |x|^(-1-a)`` (x<0), ``C+ x^(-1-a)`` (x>0).

    For ``alpha < 1`` the process is the plain sum of its jumps; for
    ``alpha > 1`` it is the compensated (zero mean) version. ``alpha == 1``
    is supported only for the symmetric case ``C- == C+``.
    """

    alpha: float = 1.5
    c_minus: float = 1.0
    c_plus: float = 1.0
    h: float = 1.0
    center: bool = False

    family: ClassVar[str] = "stable"
    param_kinds: ClassVar[dict] = {"alpha": "open2", "c_minus": "nonneg", "c_plus": "nonneg"}

    def __post_init__(self):
        self._check_common()
        if self.c_minus == 0 and self.c_plus == 0:
            raise ConfigError("stable: c_minus and c_plus cannot both be zero")
        if self.alpha == 1 and self.c_minus != self.c_plus:
            raise ConfigError("stable: alpha == 1 requires c_minus == c_plus")
        if self.center and self.alpha <= 1:
            raise ConfigError("stable: cannot center, the mean is undefined for alpha <= 1")

    def mean_rate(self):
        if self.alpha <= 1:
            raise ConfigError("stable: the mean is undefined for alpha <= 1")
        return 0.0

    def variance_rate(self):
        return math.inf

    @property
    def is_finite_variation(self):
        return self.alpha < 1

    def s1_parameters(self):
        """(scale per unit time, skewness) of the S1 parametrization."""
        a, total = self.alpha, self.c_minus + self.c_plus
        beta = (self.c_plus - self.c_minus) / total
        if a == 1:
            return 0.5 * math.pi * total, 0.0
        scale_a = -special.gamma(-a) * math.cos(0.5 * math.pi * a) * total
        return scale_a ** (1.0 / a), beta

    def _raw_exponent(self, u):
        a = self.alpha
        au = np.abs(u)
        if a == 1:
            return -0.5 * math.pi * (self.c_minus + self.c_plus) * au + 0j
        # int (e^{iux} - 1 [- iux]) x^{-1-a} dx over x>0 equals Gamma(-a) (-iu)^a
        phase = np.exp(-0.5j * math.pi * a * np.sign(u))
        return special.gamma(-a) * au ** a * (self.c_plus * phase + self.c_minus * np.conj(phase))

    def log_cf_bound_terms(self):
        a, total = self.alpha, self.c_minus + self.c_plus
        if a == 1:
            return [(self.h * 0.5 * math.pi * total, 1.0)]
        return [(self.h * abs(special.gamma(-a)) * total, a)]

    def levy_density(self, x):
        x = _nonzero(x)
        coef = np.where(x < 0, self.c_minus, self.c_plus)
        return coef * np.abs(x) ** (-1.0 - self.alpha)

    def draw_base(self, rng, n):
        return {"angle": rng.random(n), "exp": rng.random(n)}

    def from_base(self, base):
        # Chambers-Mallows-Stuck for S_alpha(scale, beta, 0), S1 parametrization
        a = self.alpha
        scale, beta = self.s1_parameters()
        scale_h = scale * self.h ** (1.0 / a) if a != 1 else scale * self.h
        v = math.pi * (base["angle"] - 0.5)
        w = -np.log1p(-base["exp"])
        if a == 1:
            return scale_h * np.tan(v)
        t = beta * math.tan(0.5 * math.pi * a)
        b = math.atan(t) / a
        s = (1.0 + t * t) ** (0.5 / a)
        x = (s * np.sin(a * (v + b)) / np.cos(v) ** (1.0 / a)
             * (np.cos(v - a * (v + b)) / w) ** ((1.0 - a) / a))
        return scale_h * x


@dataclass(frozen=True)
class CGMY(NoiseModel):
    """Tempered stable (CGMY) process; c.f. and Levy density only.

    ``M_t`` is the tempering rate of positive jumps (named apart from the
    moment-condition count M). ``Y == 1`` is rejected
    because ``Gamma(-Y)`` has a pole there.
    """

    C: float = 1.0
    G: float = 1.0
    M_t: float = 1.0
    Y: float = 0.5
    h: float = 1.0
    center: bool = False

    family: ClassVar[str] = "cgmy"
    param_kinds: ClassVar[dict] = {"C": "positive", "G": "positive", "M_t": "positive", "Y": "open2"}
    samplable: ClassVar[bool] = False

    def __post_init__(self):
        self._check_common()
        if self.Y == 1:
            raise ConfigError("cgmy: Y == 1 is not supported (pole of Gamma(-Y))")

    @property
    def is_finite_variation(self):
        return self.Y < 1

    def mean_rate(self):
        y = self.Y
        return self.C * special.gamma(-y) * y * (self.G ** (y - 1) - self.M_t ** (y - 1))

    def variance_rate(self):
        y = self.Y
        return self.C * special.gamma(2 - y) * (self.M_t ** (y - 2) + self.G ** (y - 2))

    def _raw_exponent(self, u):
        y = self.Y
        right = self.M_t - 1j * u
        left = self.G + 1j * u
        # both bases have positive real part: principal powers never cross the cut
        assert np.all(right.real > 0) and np.all(left.real > 0)
        return self.C * special.gamma(-y) * (right ** y - self.M_t ** y + left ** y - self.G ** y)

    def levy_density(self, x):
        x = _nonzero(x)
        decay = np.where(x < 0, np.exp(-self.G * np.abs(x)), np.exp(-self.M_t * np.abs(x)))
        return self.C * decay / np.abs(x) ** (1.0 + self.Y)


@dataclass(frozen=True)
class Gaussian(NoiseModel):
    """Brownian motion with drift; used as a simple base law."""

    mu: float = 0.0
    sigma: float = 1.0
    h: float = 1.0
    center: bool = False

    family: ClassVar[str] = "gaussian"
    param_kinds: ClassVar[dict] = {"mu": "real", "sigma": "positive"}

    def __post_init__(self):
        self._check_common()

    def mean_rate(self):
        return self.mu

    def variance_rate(self):
        return self.sigma ** 2

    def _raw_exponent(self, u):
        return 1j * self.mu * u - 0.5 * self.sigma ** 2 * u ** 2

    def log_cf_bound_terms(self):
        terms = [(0.5 * self.h * self.sigma ** 2, 2.0)]
        if not self.center and self.mu != 0:
            terms.append((self.h * abs(self.mu), 1.0))
        return terms

    def draw_base(self, rng, n):
        return {"normal": rng.standard_normal(n)}

    def from_base(self, base):
        x = self.sigma * math.sqrt(self.h) * base["normal"]
        if not self.center:
            x = x + self.mu * self.h
        return x


def _nonzero(x):
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise ConfigError("Levy density is undefined at x = 0")
    return x


FAMILIES = {cls.family: cls for cls in (CompoundPoisson, VarianceGamma, AlphaStable, CGMY, Gaussian)}


# functional interface ----------------------------------------------------

def char_exponent(model: NoiseModel, u):
    return model.char_exponent(u)


def char_fn_increment(model: NoiseModel, u):
    return model.char_fn(u)


def sample_increments(model: NoiseModel, n: int, seed=None) -> np.ndarray:
    return model.sample(n, seed)


def levy_density(model: NoiseModel, x):
    return model.levy_density(x)


def mean_increment(model: NoiseModel) -> float:
    return model.mean_increment()
