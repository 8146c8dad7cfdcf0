"""Naive direct-revelation mechanism and its induced normal-form game.

Agents either stay out (``None``) or join declaring a type from a finite grid
over [theta_min, theta_max]. The aggregator applies a full-information scheme
to the declared types of the members; the coalition model's quality, however,
is governed by the members' true types.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .econ import AgentPool, LearningEnv, outside_utility, risk_excess
from .errors import ConfigError, SizeRefusalError
from .schemes import solve_scheme

Action = Optional[float]          # None = stay out, float = join declaring that type
Profile = Tuple[Action, ...]

TIE_EPSILON = 1e-9
DEFAULT_J_CAP = 4
MAX_GRID = 9


def declared_type_grid(env: LearningEnv, points: int) -> Tuple[float, ...]:
    """Uniform grid over the type space, both endpoints included."""
    if points < 1:
        raise ConfigError("grid needs at least one point")
    if points == 1:
        return (float(env.theta_min),)
    return tuple(float(x) for x in np.linspace(env.theta_min, env.theta_max, points))


def coalition_shape(profile: Profile) -> str:
    members = [j for j, a in enumerate(profile) if a is not None]
    if not members:
        return "empty"
    if members == [len(profile) - 1]:
        return "worst_only"
    return "other"


def encode_action(action: Action) -> str:
    return "out" if action is None else f"in({action:.12g})"


def encode_profile(profile: Profile) -> str:
    return " ".join(encode_action(a) for a in profile)


@dataclass
class EquilibriumReport:
    profile: Profile
    is_nash: bool
    payoffs: np.ndarray
    witness: Optional[Tuple[int, Action, float]] = None
    max_gain: float = 0.0         # largest unilateral gain found (indifference margin)
    coalition_shape: str = field(init=False)

    def __post_init__(self):
        self.coalition_shape = coalition_shape(self.profile)


class RevelationGame:
    """Payoffs, best responses and Nash certification for one instance.

    Scheme solutions are cached by the sorted multiset of declarations, so
    exhaustive enumeration solves each distinct declaration set once.
    """

    def __init__(self, pool: AgentPool, env: LearningEnv, grid: Sequence[float],
                 mode: str = "binding_fixed_point", tie_epsilon: float = TIE_EPSILON):
        if not grid:
            raise ConfigError("declared-type grid must be nonempty")
        if any(g < env.theta_min or g > env.theta_max for g in grid):
            raise ConfigError("grid points must lie in the type space")
        self.pool = pool
        self.env = env
        self.grid = tuple(sorted(float(g) for g in grid))
        self.mode = mode
        self.tie_epsilon = tie_epsilon
        self.outside = np.asarray(outside_utility(pool.thetas, env), dtype=float)
        self._schemes: Dict[Tuple[float, ...], np.ndarray] = {}
        self._payoffs: Dict[Profile, np.ndarray] = {}

    @property
    def actions(self) -> Tuple[Action, ...]:
        return (None,) + self.grid

    def _sorted_contributions(self, declared: Tuple[float, ...]) -> np.ndarray:
        n = self._schemes.get(declared)
        if n is None:
            n = solve_scheme(np.array(declared), self.env, self.mode).n
            self._schemes[declared] = n
        return n

    def contributions(self, profile: Profile) -> np.ndarray:
        """Samples asked from every agent (zero for those staying out)."""
        members = [j for j, a in enumerate(profile) if a is not None]
        n = np.zeros(len(profile))
        if not members:
            return n
        decl = np.array([profile[j] for j in members], dtype=float)
        order = np.argsort(decl, kind="stable")
        n_sorted = self._sorted_contributions(tuple(decl[order]))
        n[np.array(members)[order]] = n_sorted
        return n

    def payoffs(self, profile: Profile) -> np.ndarray:
        profile = tuple(profile)
        if len(profile) != self.pool.size:
            raise ConfigError("profile length must equal the number of agents")
        cached = self._payoffs.get(profile)
        if cached is not None:
            return cached
        v = self.outside.copy()
        members = np.array([a is not None for a in profile])
        if members.any():
            n = self.contributions(profile)
            total = n.sum()
            vt_true = float(n @ self.pool.thetas / total)
            eps = float(risk_excess(vt_true, total, self.env))
            v[members] = -self.env.a * (self.env.r_star + eps) - self.env.c * n[members]
        v.setflags(write=False)
        self._payoffs[profile] = v
        return v

    def payoff(self, j: int, profile: Profile) -> float:
        return float(self.payoffs(profile)[j])

    def _deviation_values(self, j: int, profile: Profile) -> List[Tuple[Action, float]]:
        out = []
        for act in self.actions:
            dev = profile[:j] + (act,) + profile[j + 1:]
            out.append((act, self.payoff(j, dev)))
        return out

    def best_response(self, j: int, profile: Profile) -> Tuple[Action, float]:
        """Payoff-maximising action; ties go to the current action, then out,
        then the smallest declaration."""
        profile = tuple(profile)
        values = self._deviation_values(j, profile)
        top = max(v for _, v in values)
        tied = [a for a, v in values if v >= top - self.tie_epsilon]
        if profile[j] in tied:
            choice = profile[j]
        elif None in tied:
            choice = None
        else:
            choice = min(tied)
        return choice, dict(values)[choice]

    def certify(self, profile: Profile) -> EquilibriumReport:
        profile = tuple(profile)
        base = self.payoffs(profile)
        witness = None
        max_gain = -np.inf
        for j in range(len(profile)):
            for act, val in self._deviation_values(j, profile):
                if act == profile[j]:
                    continue
                gain = val - base[j]
                if gain > max_gain:
                    max_gain = gain
                if gain > self.tie_epsilon and (witness is None or gain > witness[2]):
                    witness = (j, act, float(gain))
        return EquilibriumReport(profile, witness is None, np.array(base), witness,
                                 float(max_gain))

    def all_profiles(self):
        return itertools.product(self.actions, repeat=self.pool.size)

    def enumerate_pure_nash(self, j_cap: int = DEFAULT_J_CAP) -> List[EquilibriumReport]:
        if self.pool.size > j_cap:
            raise SizeRefusalError(f"exhaustive enumeration limited to J <= {j_cap}")
        if len(self.grid) > MAX_GRID:
            raise SizeRefusalError(f"exhaustive enumeration limited to {MAX_GRID} grid points")
        reports = (self.certify(p) for p in self.all_profiles())
        return [r for r in reports if r.is_nash]

    def best_response_dynamics(self, start: Profile, max_rounds: int = 100):
        """Round-robin best responses until no agent moves.

        Returns (profile, converged, trace) where trace rows are
        (round, agent, action, coalition size after the move). Stops early,
        unconverged, once an end-of-round profile repeats: the dynamics are
        deterministic, so a repeat means a cycle.
        """
        profile = tuple(start)
        trace = [(0, -1, None, sum(a is not None for a in profile))]
        seen = {profile}
        for rnd in range(1, max_rounds + 1):
            moved = False
            for j in range(len(profile)):
                act, _ = self.best_response(j, profile)
                if act != profile[j]:
                    profile = profile[:j] + (act,) + profile[j + 1:]
                    moved = True
                    trace.append((rnd, j, act, sum(a is not None for a in profile)))
            if not moved:
                return profile, True, trace
            if profile in seen:
                break
            seen.add(profile)
        return profile, False, trace


def truthful_profile(pool: AgentPool, grid: Sequence[float]) -> Profile:
    """Everyone joins, declaring the grid point nearest their true type."""
    g = np.asarray(grid, dtype=float)
    return tuple(float(g[np.argmin(np.abs(g - t))]) for t in pool.thetas)


# Function-style entry points mirroring the game object.

def naive_payoff(j: int, profile: Profile, pool: AgentPool, env: LearningEnv,
                 mode: str = "binding_fixed_point") -> float:
    game = RevelationGame(pool, env, (env.theta_min,), mode)
    return game.payoff(j, tuple(profile))


def best_response(j, profile, grid, pool, env, mode="binding_fixed_point"):
    return RevelationGame(pool, env, grid, mode).best_response(j, tuple(profile))


def certify_nash(profile, grid, pool, env, mode="binding_fixed_point",
                 tie_epsilon: float = TIE_EPSILON) -> EquilibriumReport:
    return RevelationGame(pool, env, grid, mode, tie_epsilon).certify(tuple(profile))


def enumerate_pure_nash(grid, pool, env, mode="binding_fixed_point",
                        j_cap: int = DEFAULT_J_CAP) -> List[EquilibriumReport]:
    return RevelationGame(pool, env, grid, mode).enumerate_pure_nash(j_cap)


def best_response_dynamics(start, grid, pool, env, mode="binding_fixed_point",
                           max_rounds: int = 100):
    return RevelationGame(pool, env, grid, mode).best_response_dynamics(tuple(start), max_rounds)
