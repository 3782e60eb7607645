"""Parametric c.f. families and simulation mechanisms ``xi = F(rho, eta)``.

A *c.f. family* exposes ``param_names`` and ``cf(u, eta)``; the i.i.d.
known-c.f. estimator fits those. A *mechanism* exposes ``param_names``,
``draw(rng, n)`` for the parameter-free randomness ``rho`` and
``apply(rho, eta)``; the simulated-score estimator fits those while
keeping ``rho`` fixed across parameter values.
"""
from __future__ import annotations

import numpy as np

from .exceptions import ConfigError
from .levy import NoiseModel

__all__ = ["NoiseFamily", "ShiftFamily", "NoiseMechanism", "ShiftMechanism",
           "default_bounds", "mechanism_from_dict"]


def _free_names(model: NoiseModel, free):
    names = model.param_names if free is None else tuple(free)
    unknown = [n for n in names if n not in model.param_names]
    if unknown:
        raise ConfigError(f"free parameter(s) {unknown} not in {model.param_names}")
    if not names:
        raise ConfigError("no free parameters to estimate")
    return names


class NoiseFamily:
    """The c.f. of one increment of ``template`` as a function of its free parameters."""

    def __init__(self, template: NoiseModel, free=None):
        self.template = template
        self.param_names = _free_names(template, free)

    @property
    def start(self) -> np.ndarray:
        return np.array([getattr(self.template, n) for n in self.param_names])

    def model(self, eta) -> NoiseModel:
        return self.template.with_eta(eta, self.param_names)

    def cf(self, u, eta):
        return self.model(eta).char_fn(u)

    def kinds(self):
        return [self.template.param_kinds[n] for n in self.param_names]


class ShiftFamily:
    """Law of ``rho + eta`` with known base law ``rho``."""

    param_names = ("shift",)

    def __init__(self, rho: NoiseModel, start: float = 0.0):
        self.rho = rho
        self.start = np.array([float(start)])

    def cf(self, u, eta):
        u = np.asarray(u, dtype=float)
        return np.exp(1j * u * float(np.asarray(eta).ravel()[0])) * self.rho.char_fn(u)

    def kinds(self):
        return ["real"]


class NoiseMechanism(NoiseFamily):
    """``F(rho, eta)``: increments of ``template`` with parameters ``eta`` from fixed draws."""

    def draw(self, rng, n):
        return self.template.draw_base(rng, n)

    def apply(self, rho, eta):
        return self.model(eta).from_base(rho)


class ShiftMechanism(ShiftFamily):
    """``F(rho, eta) = rho + eta``."""

    def draw(self, rng, n):
        return self.rho.sample(n, rng)

    def apply(self, rho, eta):
        return rho + float(np.asarray(eta).ravel()[0])


def default_bounds(start, kinds) -> np.ndarray:
    """Compact search box with ``start`` in its interior."""
    out = []
    for s, kind in zip(np.atleast_1d(start), kinds):
        s = float(s)
        if kind == "positive":
            out.append((s / 10.0, s * 10.0) if s > 0 else (1e-6, 1.0))
        elif kind == "nonneg":
            out.append((0.0, max(10.0 * s, 1.0)))
        elif kind == "unit":
            out.append((0.0, 1.0))
        elif kind == "open2":
            out.append((0.05, 1.95))
        else:
            span = 5.0 * (abs(s) + 1.0)
            out.append((s - span, s + span))
    return np.array(out, dtype=float)


def mechanism_from_dict(config: dict):
    kind = config.get("kind", "shift")
    rho = NoiseModel.from_dict(config["rho"]) if "rho" in config else None
    if kind == "shift":
        if rho is None:
            raise ConfigError("mechanism.rho is required for the shift mechanism")
        return ShiftMechanism(rho, config.get("start", 0.0))
    if kind == "noise":
        if rho is None:
            raise ConfigError("mechanism.rho is required for the noise mechanism")
        return NoiseMechanism(rho, config.get("free"))
    raise ConfigError(f"mechanism.kind: unknown mechanism {kind!r}; expected 'shift' or 'noise'")
