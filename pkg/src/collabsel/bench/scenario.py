"""Scenario files: JSON documents describing one experiment.

The field reference lives in ``docs/scenario.md``. Loading rejects unknown
fields, fills defaults, and reports every violated rule in one error.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..econ import AgentPool, LearningEnv, classif_env, s0_env
from ..errors import ConfigError, InfeasibleVerificationError
from ..game import MAX_GRID
from ..mechanisms import q_floor

EXPERIMENTS = ("scheme", "game", "vcg", "verify", "estimate", "sweep")
STOCHASTIC = ("verify", "estimate")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EnvSpec(_Strict):
    preset: Optional[Literal["S0", "classif_unitrate", "classif_halfrate"]] = "S0"
    alpha_delta: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    delta: Optional[float] = None
    a: Optional[float] = None
    c: Optional[float] = None
    r_star: Optional[float] = None
    theta_min: Optional[float] = None
    theta_max: Optional[float] = None
    rad: Optional[float] = None


class PoolSpec(_Strict):
    thetas: Optional[List[float]] = None
    count: Optional[int] = Field(default=None, ge=1)
    spacing: Literal["even", "step", "random"] = "even"
    low: Optional[float] = None
    high: Optional[float] = None


class GridSpec(_Strict):
    declared_points: int = Field(default=5, ge=1, le=MAX_GRID)
    grid_step: float = Field(default=0.25, gt=0)


class SolverSpec(_Strict):
    scheme_mode: Literal["closed_form", "binding_fixed_point"] = "closed_form"
    game_mode: Literal["closed_form", "binding_fixed_point"] = "binding_fixed_point"
    verify_mode: Literal["closed_form", "binding_fixed_point"] = "closed_form"
    oracle: Literal["brute_force", "continuous", "none"] = "brute_force"
    j_cap: int = Field(default=4, ge=1)
    max_rounds: int = Field(default=100, ge=1)


class McSpec(_Strict):
    trials: int = Field(default=10_000, ge=1)
    seed: Optional[int] = Field(default=None, ge=0, lt=2 ** 64)
    noise_model: Literal["uniform_within_eta", "corners_within_eta", "both"] = "both"
    eta: Optional[float] = Field(default=None, ge=0)
    q_floor: Optional[float] = Field(default=None, gt=0)


class ClassifSpec(_Strict):
    t_star: float = Field(default=0.5, ge=0, le=1)
    flip_probs: List[float] = [0.0, 0.02, 0.04, 0.06]
    q: int = Field(default=50, ge=1)
    q_prime: int = Field(default=200, ge=1)
    preset: Literal["classif_unitrate", "classif_halfrate"] = "classif_unitrate"
    j_count: int = Field(default=1, ge=1)


class SweepSpec(_Strict):
    over: Literal["J", "eta", "q"]
    values: List[float] = Field(min_length=1)


class Scenario(_Strict):
    experiment: Optional[Literal["scheme", "game", "vcg", "verify", "estimate", "sweep"]] = None
    env: EnvSpec = EnvSpec()
    pool: PoolSpec = PoolSpec(thetas=[0.0, 0.02, 0.04, 0.06])
    grids: GridSpec = GridSpec()
    solver: SolverSpec = SolverSpec()
    mc: McSpec = McSpec()
    classif: ClassifSpec = ClassifSpec()
    sweep: Optional[SweepSpec] = None

    def resolved(self) -> dict:
        """Every field with defaults filled in, ready to echo into outputs.

        Environment constants implied by a preset are written out too.
        """
        out = self.model_dump(mode="json")
        try:
            env = build_env(self.env)
        except ConfigError:
            return out
        out["env"].update({k: getattr(env, k) for k in _ENV_FIELDS})
        return out


# Construction of domain objects ------------------------------------------------

_ENV_FIELDS = ("alpha_delta", "beta", "gamma", "delta", "a", "c", "r_star",
               "theta_min", "theta_max")


def build_env(spec: EnvSpec) -> LearningEnv:
    given = {k: getattr(spec, k) for k in _ENV_FIELDS if getattr(spec, k) is not None}
    if spec.preset == "S0":
        if spec.rad is not None:
            raise ConfigError("env.rad only applies to the classification presets")
        return s0_env(**given)
    if spec.preset is None:
        missing = [k for k in ("alpha_delta", "beta", "gamma", "delta", "a", "c") if k not in given]
        if missing:
            raise ConfigError("custom env needs " + ", ".join(f"env.{k}" for k in missing))
        if spec.rad is not None:
            raise ConfigError("env.rad only applies to the classification presets")
        return LearningEnv(**given)
    fixed = [k for k in ("alpha_delta", "beta", "gamma") if k in given]
    if fixed:
        raise ConfigError(f"preset {spec.preset} fixes " + ", ".join(f"env.{k}" for k in fixed))
    return classif_env(spec.preset, rad=spec.rad or 0.0, **given)


def build_pool(spec: PoolSpec, env: LearningEnv, seed: Optional[int],
               count: Optional[int] = None) -> AgentPool:
    """Explicit type list, or ``count`` types on [low, high].

    ``even`` includes both ends, ``step`` uses theta_j = low + (j-1)(high-low)/J,
    ``random`` draws sorted uniforms from the scenario seed.
    """
    if spec.thetas is not None and count is None:
        return AgentPool(np.asarray(spec.thetas, dtype=float)).check_bounds(env)
    j = count if count is not None else spec.count
    if j is None:
        raise ConfigError("pool needs thetas or count")
    low = env.theta_min if spec.low is None else spec.low
    high = env.theta_max if spec.high is None else spec.high
    if spec.spacing == "even":
        thetas = np.linspace(low, high, j) if j > 1 else np.array([low])
    elif spec.spacing == "step":
        thetas = low + np.arange(j) * (high - low) / j
    else:
        if seed is None:
            raise ConfigError("random pool spacing needs mc.seed")
        rng = np.random.default_rng([int(seed), 0x5EED, j])
        thetas = np.sort(rng.uniform(low, high, j))
    return AgentPool(thetas).check_bounds(env)


# Loading and validation --------------------------------------------------------

def _format_pydantic(err: ValidationError) -> List[str]:
    out = []
    for e in err.errors():
        where = ".".join(str(p) for p in e["loc"]) or "<root>"
        out.append(f"{where}: {e['msg']}")
    return out


def parse_scenario(data: dict, experiment: Optional[str] = None,
                   seed: Optional[int] = None) -> Scenario:
    """Validate a decoded document; ``experiment`` and ``seed`` override it."""
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    try:
        sc = Scenario.model_validate(data)
    except ValidationError as exc:
        raise ConfigError("invalid scenario:\n  " + "\n  ".join(_format_pydantic(exc))) from None
    updates = {}
    if experiment is not None:
        if sc.experiment is not None and sc.experiment != experiment:
            raise ConfigError(f"scenario is for '{sc.experiment}', not '{experiment}'")
        updates["experiment"] = experiment
    if seed is not None:
        updates["mc"] = sc.mc.model_copy(update={"seed": int(seed)})
    if updates:
        sc = sc.model_copy(update=updates)
    validate(sc)
    return sc


def load_scenario(path, experiment: Optional[str] = None,
                  seed: Optional[int] = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_scenario(data, experiment, seed)


def validate(sc: Scenario) -> None:
    """Collect every cross-field violation and raise them together."""
    problems: List[str] = []
    infeasible = None
    exp = sc.experiment
    if exp is None:
        problems.append("experiment: not set in the file or on the command line")
    env = None
    try:
        env = build_env(sc.env)
    except ConfigError as exc:
        problems.append(f"env: {exc}")
    if sc.pool.thetas is None and sc.pool.count is None:
        problems.append("pool: give thetas or count")
    if sc.pool.thetas is not None:
        t = np.asarray(sc.pool.thetas, dtype=float)
        if t.size == 0:
            problems.append("pool.thetas: empty")
        elif np.any(np.diff(t) <= 0):
            problems.append("pool.thetas: types must be strictly increasing (no duplicates)")
        if env is not None and t.size and (t.min() < env.theta_min or t.max() > env.theta_max):
            problems.append(f"pool.thetas: outside [{env.theta_min}, {env.theta_max}]")
    if sc.pool.spacing == "random" and sc.pool.thetas is None and sc.mc.seed is None:
        problems.append("mc.seed: required for random pool spacing")
    stochastic = exp in STOCHASTIC or (exp == "sweep" and sc.sweep is not None
                                       and sc.sweep.over in ("eta", "q"))
    if stochastic and sc.mc.seed is None:
        problems.append("mc.seed: required for stochastic experiments")
    if exp == "sweep":
        if sc.sweep is None:
            problems.append("sweep: required for the sweep experiment")
        else:
            problems.extend(_sweep_problems(sc.sweep))
    elif sc.sweep is not None and exp is not None:
        problems.append(f"sweep: only allowed for the sweep experiment, not '{exp}'")
    if exp == "estimate" or (exp == "sweep" and sc.sweep and sc.sweep.over == "q"):
        bad = [p for p in sc.classif.flip_probs if not 0 <= p < 0.5]
        if bad or not sc.classif.flip_probs:
            problems.append("classif.flip_probs: need values in [0, 1/2)")
    needs_floor = exp == "verify" or (exp == "sweep" and sc.sweep and sc.sweep.over == "eta")
    if needs_floor and env is not None:
        try:
            q_floor(env, sc.mc.q_floor)
        except InfeasibleVerificationError as exc:
            infeasible = exc
            problems.append(f"env: {exc}")
        except ConfigError as exc:
            problems.append(f"mc.q_floor: {exc}")
    if problems:
        msg = "invalid scenario:\n  " + "\n  ".join(problems)
        if infeasible is not None and len(problems) == 1:
            raise InfeasibleVerificationError(msg)
        raise ConfigError(msg)


def _sweep_problems(sw: SweepSpec) -> List[str]:
    out = []
    if sw.over == "J":
        if any(v < 1 or v != math.floor(v) for v in sw.values):
            out.append("sweep.values: J values must be positive integers")
    elif sw.over == "q":
        if any(v < 1 or v != math.floor(v) for v in sw.values):
            out.append("sweep.values: q values must be positive integers")
    elif any(v < 0 for v in sw.values):
        out.append("sweep.values: eta values must be >= 0")
    return out
