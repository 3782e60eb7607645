"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class LevyECFError(Exception):
    """Base class for errors raised by levyecf."""


class ConfigError(LevyECFError, ValueError):
    """Invalid configuration, model parameters or input data."""


class StabilityError(ConfigError):
    """A system realization has poles on or outside the stability margin."""

    def __init__(self, message, pole_moduli=()):
        super().__init__(message)
        self.pole_moduli = tuple(pole_moduli)


class UnsupportedSamplerError(LevyECFError, NotImplementedError):
    """Sampling was requested for a family that only exposes its c.f."""


class ConvergenceError(LevyECFError, RuntimeError):
    """The optimizer failed to converge from every start."""

    def __init__(self, message, traces=()):
        super().__init__(message)
        self.traces = list(traces)


class IdentifiabilityError(LevyECFError, ArithmeticError):
    """The sensitivity matrix is rank deficient at the estimate."""

    def __init__(self, message, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction
