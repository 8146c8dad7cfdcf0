"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""

from __future__ import annotations


class CollabError(Exception):
    exit_code = 1


class ConfigError(CollabError, ValueError):
    """Invalid parameters or scenario file."""

    exit_code = 2


class DegenerateEnvError(ConfigError):
    """Environment where no agent is willing to sample (outside count <= 0)."""


class UndefinedCoalitionError(CollabError, ValueError):
    """Coalition quantity requested while the coalition holds no samples."""


class InfeasibleVerificationError(CollabError):
    """Verification floor q_floor would be nonpositive for this environment."""

    exit_code = 3


class ConvergenceError(CollabError, RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual

    exit_code = 4


class InfeasibleContributorCountError(CollabError):
    """Binding fixed point exists only with a negative contribution."""

    exit_code = 4


class SizeRefusalError(CollabError):
    """Exhaustive computation refused because the instance is too large."""

    exit_code = 5
