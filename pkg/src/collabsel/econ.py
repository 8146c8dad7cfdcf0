"""Primitive quantities of the collaborative-learning model.

Everything here is a pure function of its arguments. Contributions are real
numbers; nothing is rounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DegenerateEnvError, UndefinedCoalitionError

PRESETS = ("S0", "classif_unitrate", "classif_halfrate")


@dataclass(frozen=True)
class LearningEnv:
    """PAC-bound constants, economic weights and the type-space bounds.

    ``pac_preset`` names the parameterisation ``alpha_delta`` came from, if
    any; it lets :func:`collabsel.classif.eta_bound` re-evaluate the PAC
    constant at a smaller confidence level.
    """

    alpha_delta: float
    beta: float
    gamma: float
    delta: float
    a: float
    c: float
    r_star: float = 0.0
    theta_min: float = 0.0
    theta_max: float = 0.06
    pac_preset: Optional[str] = None

    def __post_init__(self):
        vals = (self.alpha_delta, self.beta, self.gamma, self.delta, self.a,
                self.c, self.r_star, self.theta_min, self.theta_max)
        if not all(math.isfinite(float(v)) for v in vals):
            raise ConfigError("LearningEnv fields must be finite")
        problems = []
        if self.alpha_delta <= 0:
            problems.append("alpha_delta must be > 0")
        if self.beta < 0:
            problems.append("beta must be >= 0")
        if self.gamma <= 0:
            problems.append("gamma must be > 0")
        if not 0 < self.delta < 1:
            problems.append("delta must lie in (0, 1)")
        if self.a <= 0 or self.c <= 0:
            problems.append("a and c must be > 0")
        if self.r_star < 0:
            problems.append("r_star must be >= 0")
        if self.theta_min < 0 or self.theta_max < self.theta_min:
            problems.append("need 0 <= theta_min <= theta_max")
        if self.pac_preset is not None and self.pac_preset not in PRESETS:
            problems.append(f"unknown pac_preset {self.pac_preset!r}")
        if problems:
            raise ConfigError("; ".join(problems))
        if 2 * self.a * self.gamma * self.alpha_delta / self.c <= 1:
            raise DegenerateEnvError(
                "2a/c must exceed 1/(gamma*alpha_delta): no agent would sample"
            )

    @property
    def ratio(self) -> float:
        """Marginal value of one unit of type, in samples: 2a/c."""
        return 2 * self.a / self.c

    def scaled(self, kappa: float) -> "LearningEnv":
        return replace(self, a=self.a * kappa, c=self.c * kappa)

    def to_dict(self) -> dict:
        return {
            "alpha_delta": self.alpha_delta, "beta": self.beta,
            "gamma": self.gamma, "delta": self.delta, "a": self.a, "c": self.c,
            "r_star": self.r_star, "theta_min": self.theta_min,
            "theta_max": self.theta_max, "pac_preset": self.pac_preset,
        }


def s0_env(**overrides) -> LearningEnv:
    """Reference environment: alpha=1, beta=0, gamma=1, a=50, c=1 (n_out = 9)."""
    params = dict(alpha_delta=1.0, beta=0.0, gamma=1.0, delta=0.05, a=50.0,
                  c=1.0, r_star=0.0, theta_min=0.0, theta_max=0.06,
                  pac_preset="S0")
    params.update(overrides)
    return LearningEnv(**params)


def classif_env(preset: str, delta: float = 0.05, a: float = 50.0, c: float = 1.0,
                rad: float = 0.0, theta_min: float = 0.0, theta_max: float = 0.06,
                r_star: float = 0.0) -> LearningEnv:
    """Classification parameterisations of the PAC bound.

    ``classif_halfrate``: alpha = sqrt(ln(1/delta)/2), gamma = 1/2.
    ``classif_unitrate``: alpha = ln(1/delta)^(1/2), gamma = 1.
    Both use beta = 2 * rad.
    """
    if preset == "classif_halfrate":
        alpha, gamma = math.sqrt(math.log(1 / delta) / 2), 0.5
    elif preset == "classif_unitrate":
        alpha, gamma = math.sqrt(math.log(1 / delta)), 1.0
    else:
        raise ConfigError(f"unknown classification preset {preset!r}")
    return LearningEnv(alpha_delta=alpha, beta=2 * rad, gamma=gamma, delta=delta,
                       a=a, c=c, r_star=r_star, theta_min=theta_min,
                       theta_max=theta_max, pac_preset=preset)


@dataclass(frozen=True)
class AgentPool:
    thetas: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thetas, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ConfigError("an agent pool needs a nonempty 1-D type vector")
        if not np.all(np.isfinite(t)):
            raise ConfigError("types must be finite")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("types must be strictly increasing (duplicates rejected)")
        t.setflags(write=False)
        object.__setattr__(self, "thetas", t)

    @property
    def size(self) -> int:
        return int(self.thetas.size)

    def check_bounds(self, env: LearningEnv) -> "AgentPool":
        if self.thetas[0] < env.theta_min or self.thetas[-1] > env.theta_max:
            raise ConfigError(
                f"types must lie in [{env.theta_min}, {env.theta_max}]"
            )
        return self


@dataclass(frozen=True)
class ContributionScheme:
    """Membership vector ``b`` and contribution vector ``n``."""

    b: np.ndarray
    n: np.ndarray = field(default=None)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=int)
        n = np.zeros(b.shape) if self.n is None else np.asarray(self.n, dtype=float)
        if b.shape != n.shape or b.ndim != 1:
            raise ConfigError("b and n must be vectors of equal length")
        if np.any((b != 0) & (b != 1)):
            raise ConfigError("membership entries must be 0 or 1")
        if np.any(n < 0) or not np.all(np.isfinite(n)):
            raise ConfigError("contributions must be finite and nonnegative")
        if np.any(n[b == 0] != 0):
            raise ConfigError("non-members cannot contribute")
        b.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "n", n)

    @property
    def big_n(self) -> float:
        return float(np.sum(self.b * self.n))

    @property
    def l_star(self) -> int:
        return int(np.count_nonzero((self.b == 1) & (self.n > 0)))

    def vartheta(self, thetas) -> Optional[float]:
        """Contribution-weighted average type, or None for an empty pool."""
        total = self.big_n
        if total <= 0:
            return None
        return float(np.sum(self.b * self.n * np.asarray(thetas, dtype=float)) / total)


def risk_excess(theta, n, env: LearningEnv):
    """Excess-risk bound 2[alpha (1+n)^-gamma + beta + theta]."""
    return 2.0 * (env.alpha_delta * np.power(1.0 + np.asarray(n, dtype=float), -env.gamma)
                  + env.beta + np.asarray(theta, dtype=float))


def outside_sample_count(env: LearningEnv) -> float:
    n_out = (2 * env.a * env.gamma * env.alpha_delta / env.c) ** (1 / (env.gamma + 1)) - 1
    if n_out <= 0:
        raise DegenerateEnvError("outside sample count is not positive")
    return float(n_out)


def outside_utility(theta, env: LearningEnv):
    n_out = outside_sample_count(env)
    return -env.a * (env.r_star + risk_excess(theta, n_out, env)) - env.c * n_out


def coalition_risk(scheme: ContributionScheme, thetas, env: LearningEnv) -> float:
    vt = scheme.vartheta(thetas)
    if vt is None:
        raise UndefinedCoalitionError("coalition holds no samples")
    return float(risk_excess(vt, scheme.big_n, env))


def agent_utility(j: int, scheme: ContributionScheme, pool: AgentPool,
                  env: LearningEnv) -> float:
    theta_j = pool.thetas[j]
    n_j = scheme.n[j]
    if scheme.b[j] == 1:
        eps = coalition_risk(scheme, pool.thetas, env)
    else:
        eps = float(risk_excess(theta_j, n_j, env))
    return float(-env.a * (env.r_star + eps) - env.c * n_j)


def utilities(scheme: ContributionScheme, pool: AgentPool, env: LearningEnv) -> np.ndarray:
    """Members' coalition utility; non-members at their outside optimum."""
    out = np.asarray(outside_utility(pool.thetas, env), dtype=float)
    members = scheme.b == 1
    if not members.any():
        return out
    eps = coalition_risk(scheme, pool.thetas, env)
    inside = -env.a * (env.r_star + eps) - env.c * scheme.n
    return np.where(members, inside, out)


def welfare(scheme: ContributionScheme, pool: AgentPool, env: LearningEnv) -> float:
    return float(np.sum(utilities(scheme, pool, env)))


def max_contribution(j: int, scheme: ContributionScheme, pool: AgentPool,
                     env: LearningEnv) -> float:
    """Largest ask keeping agent ``j`` at its outside utility. May be negative."""
    n_out = outside_sample_count(env)
    eps = coalition_risk(scheme, pool.thetas, env)
    return float(n_out - (env.a / env.c) * (eps - risk_excess(pool.thetas[j], n_out, env)))


def max_contributions(vartheta: float, big_n: float, thetas: Sequence[float],
                      env: LearningEnv) -> np.ndarray:
    """Vector form of :func:`max_contribution` for a given (vartheta, N)."""
    n_out = outside_sample_count(env)
    t = np.asarray(thetas, dtype=float)
    return n_out - (env.a / env.c) * (risk_excess(vartheta, big_n, env)
                                      - risk_excess(t, n_out, env))
