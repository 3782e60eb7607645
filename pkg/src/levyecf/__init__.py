"""Empirical characteristic function estimation for Levy-driven linear systems."""

__version__ = "0.1.0"

from .core import (JointCF, ScoreSet, UGrid, WeightMatrix, asymptotic_cov, ecf, joint_cf,
                   sandwich_cov, theory_cov_C, theory_cov_Lambda)
from .estimators import (ECFDynamicsEstimator, ECFEstimator, ECFJointEstimator, EstimationProblem,
                         EstimationResult, SimulatedECFEstimator, estimate_dynamics,
                         estimate_iid_known_cf, estimate_iid_simulated, estimate_joint)
from .exceptions import (ConfigError, ConvergenceError, IdentifiabilityError, LevyECFError,
                         StabilityError, UnsupportedSamplerError)
from .levy import CGMY, AlphaStable, CompoundPoisson, Gaussian, NoiseModel, VarianceGamma
from .mechanisms import NoiseFamily, NoiseMechanism, ShiftFamily, ShiftMechanism
from .optimize import minimize_cost
from .systems import SystemModel, apply_filter, build_system, impulse_response, make_blocks

__all__ = [
    "__version__",
    "UGrid", "WeightMatrix", "ScoreSet", "JointCF", "ecf", "joint_cf", "theory_cov_C",
    "theory_cov_Lambda", "asymptotic_cov", "sandwich_cov",
    "EstimationProblem", "EstimationResult", "estimate_iid_known_cf", "estimate_iid_simulated",
    "estimate_dynamics", "estimate_joint",
    "ECFEstimator", "SimulatedECFEstimator", "ECFDynamicsEstimator", "ECFJointEstimator",
    "LevyECFError", "ConfigError", "StabilityError", "UnsupportedSamplerError", "ConvergenceError",
    "IdentifiabilityError",
    "NoiseModel", "CompoundPoisson", "VarianceGamma", "AlphaStable", "CGMY", "Gaussian",
    "NoiseFamily", "ShiftFamily", "NoiseMechanism", "ShiftMechanism",
    "minimize_cost",
    "SystemModel", "build_system", "impulse_response", "apply_filter", "make_blocks",
]
