"""Incentive-aware collaborative learning: contribution schemes, the naive
revelation game, VCG transfers, probabilistic verification and a
threshold-classifier sandbox for type estimation."""

from .econ import (
    AgentPool,
    ContributionScheme,
    LearningEnv,
    classif_env,
    outside_sample_count,
    outside_utility,
    risk_excess,
    s0_env,
    utilities,
    welfare,
)
from .errors import (
    CollabError,
    ConfigError,
    ConvergenceError,
    InfeasibleVerificationError,
    SizeRefusalError,
)
from .schemes import SchemeSolution, binding_scheme, simplified_scheme, solve_scheme

__version__ = "0.1.0"

__all__ = [
    "AgentPool", "CollabError", "ConfigError", "ContributionScheme", "ConvergenceError",
    "InfeasibleVerificationError", "LearningEnv", "SchemeSolution", "SizeRefusalError",
    "binding_scheme", "classif_env", "outside_sample_count", "outside_utility",
    "risk_excess", "s0_env", "simplified_scheme", "solve_scheme", "utilities", "welfare",
]
