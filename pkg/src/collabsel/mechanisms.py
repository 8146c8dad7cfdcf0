"""VCG transfers and the probabilistic-verification mechanism.

VCG transfers are computed only to exhibit the agent who would have to be
paid. The verification mechanism replaces declarations by estimated types,
biases each agent's estimate downward and everybody else's upward by eta,
and asks for at least ``q_floor`` samples from every member.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .econ import (
    AgentPool,
    ContributionScheme,
    LearningEnv,
    outside_sample_count,
    outside_utility,
    risk_excess,
    utilities,
)
from .errors import ConfigError, InfeasibleVerificationError
from .schemes import simplified_contributions_batch, solve_scheme

log = logging.getLogger(__name__)

NOISE_MODELS = ("uniform_within_eta", "corners_within_eta")
NASH_TOL = 1e-9
MC_CHUNK = 2048


def vcg_transfers(declared, pool: AgentPool, env: LearningEnv,
                  mode: str = "closed_form") -> np.ndarray:
    """Pivot transfers t_j under the grand coalition.

    The removal term keeps the scheme vector fixed and only drops agent j
    from membership, so the coalition loses j's samples.
    """
    n = solve_scheme(np.asarray(declared, dtype=float), env, mode).n
    j_count = pool.size
    full = ContributionScheme(np.ones(j_count, dtype=int), n)
    u_full = utilities(full, pool, env)
    t = np.zeros(j_count)
    for j in range(j_count):
        if j_count == 1:
            break
        b = np.ones(j_count, dtype=int)
        b[j] = 0
        n_minus = n.copy()
        n_minus[j] = 0.0
        others = np.arange(j_count) != j
        u_minus = _member_utilities(b, n_minus, pool, env)
        t[j] = u_minus[others].sum() - u_full[others].sum()
    return t


def _member_utilities(b, n, pool, env) -> np.ndarray:
    # Members whose coalition holds no samples get the empty-pool limit
    # (risk bound at N = 0 with their own type), not an error: this only
    # arises in the pivot sums where the lone contributor is removed.
    if np.sum(b * n) > 0:
        return utilities(ContributionScheme(b, n), pool, env)
    u = np.asarray(outside_utility(pool.thetas, env), dtype=float)
    lone = -env.a * (env.r_star + risk_excess(pool.thetas, 0.0, env)) - env.c * n
    return np.where(b == 1, lone, u)


def check_positive_transfer(t) -> Optional[int]:
    """Index of an agent who must receive money (-t_j > 0), if any."""
    t = np.asarray(t, dtype=float)
    hits = np.nonzero(-t > 0)[0]
    if hits.size == 0:
        return None
    return int(hits[np.argmax(-t[hits])])


def q_floor(env: LearningEnv, requested: Optional[float] = None) -> float:
    """Verification sample count: the largest admissible value unless a
    smaller one is requested."""
    bound = outside_sample_count(env) - env.ratio * (env.theta_max - env.theta_min)
    if bound <= 0:
        raise InfeasibleVerificationError(
            f"verification floor bound {bound:.6g} <= 0: type space too wide for a/c"
        )
    if requested is None:
        return float(bound)
    if not 0 < requested <= bound:
        raise ConfigError(f"q_floor must lie in (0, {bound:.6g}]")
    return float(requested)


def bias_vector(j: int, coalition_size: int, eta: float) -> np.ndarray:
    """+eta for everybody, -eta for agent ``j`` (0-based)."""
    if not 0 <= j < coalition_size:
        raise ConfigError("j out of range")
    v = np.full(coalition_size, float(eta))
    v[j] = -eta
    return v


@dataclass(frozen=True)
class VerificationRound:
    members: np.ndarray        # indices of coalition members
    estimates: np.ndarray      # estimated types of members
    eta: float
    q_floor: float
    asked: np.ndarray          # n*_j at the agent's own biased vector
    requested: np.ndarray      # max(q_floor, asked), zero for non-members
    kept: np.ndarray           # samples pooled for training
    payoffs: np.ndarray

    @property
    def contributors(self) -> np.ndarray:
        return np.nonzero(self.kept > 0)[0]


def verification_round(b, pool: AgentPool, env: LearningEnv, estimates, eta: float,
                       floor: Optional[float] = None,
                       mode: str = "closed_form") -> VerificationRound:
    """One pass of the verification mechanism for membership ``b``.

    ``estimates`` holds one entry per agent; only members' entries are read.
    The coalition model's risk uses the true types weighted by kept samples.
    """
    b = np.asarray(b, dtype=int)
    est = np.asarray(estimates, dtype=float)
    if b.shape != (pool.size,) or est.shape != (pool.size,):
        raise ConfigError("b and estimates need one entry per agent")
    if eta < 0:
        raise ConfigError("eta must be nonnegative")
    qf = q_floor(env, floor)
    members = np.nonzero(b)[0]
    j_count = pool.size
    asked = np.zeros(j_count)
    requested = np.zeros(j_count)
    kept = np.zeros(j_count)
    member_est = est[members]
    for pos, j in enumerate(members):
        biased = member_est + bias_vector(pos, members.size, eta)
        asked[j] = solve_scheme(biased, env, mode).n[pos]
        requested[j] = max(qf, asked[j])
        kept[j] = requested[j] if asked[j] > 0 else 0.0
    payoffs = np.asarray(outside_utility(pool.thetas, env), dtype=float).copy()
    if members.size:
        payoffs[members] = _pooled_payoffs(kept[None, :], requested[None, :],
                                           pool, env)[0, members]
    return VerificationRound(members, member_est, float(eta), qf, asked, requested,
                             kept, payoffs)


def _pooled_payoffs(kept, requested, pool, env) -> np.ndarray:
    # Row-wise member payoffs. A pool with no kept samples leaves every
    # member with the empty-sample bound on its own type.
    # Column-by-column sums keep one row and many rows bit-identical.
    total = np.zeros(kept.shape[0])
    weighted = np.zeros(kept.shape[0])
    for j, theta in enumerate(pool.thetas):
        total += kept[:, j]
        weighted += kept[:, j] * theta
    safe = np.where(total > 0, total, 1.0)
    vt = weighted / safe
    eps = np.where((total > 0)[:, None], risk_excess(vt, total, env)[:, None],
                   risk_excess(pool.thetas, 0.0, env)[None, :])
    return -env.a * (env.r_star + eps) - env.c * requested


def grand_coalition_payoffs_batch(pool: AgentPool, env: LearningEnv, estimates, eta: float,
                                  floor: Optional[float] = None) -> np.ndarray:
    """Grand-coalition payoffs for a (T, J) array of estimate vectors under
    the closed-form scheme; row t equals ``verification_round(...).payoffs``.
    """
    est = np.asarray(estimates, dtype=float)
    if est.ndim != 2 or est.shape[1] != pool.size:
        raise ConfigError("estimates must have shape (T, J)")
    if eta < 0:
        raise ConfigError("eta must be nonnegative")
    qf = q_floor(env, floor)
    rows, size = est.shape
    bias = np.full((size, size), float(eta))
    np.fill_diagonal(bias, -eta)
    biased = (est[:, None, :] + bias[None, :, :]).reshape(rows * size, size)
    n, _, _ = simplified_contributions_batch(biased, env)
    asked = n.reshape(rows, size, size)[:, np.arange(size), np.arange(size)]
    requested = np.maximum(qf, asked)
    kept = np.where(asked > 0, requested, 0.0)
    return _pooled_payoffs(kept, requested, pool, env)


def grand_coalition_nash_check(pool: AgentPool, env: LearningEnv, estimates, eta: float,
                               floor: Optional[float] = None, mode: str = "closed_form",
                               tol: float = NASH_TOL) -> Tuple[bool, Optional[Tuple[int, float]]]:
    """Exact check that nobody gains by leaving the grand coalition.

    Leaving yields exactly the outside utility, so J comparisons suffice.
    Returns (is_nash, witness) with witness = (agent, payoff shortfall).
    """
    rnd = verification_round(np.ones(pool.size, dtype=int), pool, env, estimates, eta,
                             floor, mode)
    margin = rnd.payoffs - np.asarray(outside_utility(pool.thetas, env), dtype=float)
    worst = int(np.argmin(margin))
    if margin[worst] < -tol:
        return False, (worst, float(margin[worst]))
    return True, None


def draw_estimates(thetas, eta: float, noise_model: str,
                   rng: np.random.Generator) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)
    if noise_model == "uniform_within_eta":
        xi = rng.uniform(-eta, eta, size=thetas.size)
    elif noise_model == "corners_within_eta":
        xi = eta * rng.choice((-1.0, 1.0), size=thetas.size)
    else:
        raise ConfigError(f"unknown noise model {noise_model!r}")
    return thetas + xi


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(trial)])


def verification_trial(pool, env, eta, noise_model, seed, trial, floor=None,
                       mode="closed_form"):
    """One Monte Carlo trial: (estimates, is_nash, witness)."""
    est = draw_estimates(pool.thetas, eta, noise_model, trial_rng(seed, trial))
    ok, witness = grand_coalition_nash_check(pool, env, est, eta, floor, mode)
    return est, ok, witness


def nash_trial_outcomes(pool: AgentPool, env: LearningEnv, noise_model: str,
                        start: int, stop: int, seed: int, eta: float,
                        floor: Optional[float] = None,
                        mode: str = "closed_form") -> Tuple[int, list]:
    """Run trials ``start..stop-1``; returns (hits, failures).

    Each trial draws from its own (seed, trial) stream, so any split of the
    trial range into chunks reproduces the same outcomes.
    """
    failures = []
    hits = 0
    if mode != "closed_form":
        for trial in range(start, stop):
            est, ok, witness = verification_trial(pool, env, eta, noise_model, seed, trial,
                                                  floor, mode)
            if ok:
                hits += 1
            else:
                failures.append((trial, est, witness))
        return hits, failures
    outside = np.asarray(outside_utility(pool.thetas, env), dtype=float)
    for lo in range(start, stop, MC_CHUNK):
        ids = range(lo, min(stop, lo + MC_CHUNK))
        est = np.stack([draw_estimates(pool.thetas, eta, noise_model, trial_rng(seed, t))
                        for t in ids])
        margin = grand_coalition_payoffs_batch(pool, env, est, eta, floor) - outside
        worst = np.argmin(margin, axis=1)
        low = margin[np.arange(len(ids)), worst]
        for row, trial in enumerate(ids):
            if low[row] < -NASH_TOL:
                failures.append((trial, est[row], (int(worst[row]), float(low[row]))))
            else:
                hits += 1
    return hits, failures


def monte_carlo_nash_probability(pool: AgentPool, env: LearningEnv, noise_model: str,
                                 trials: int, seed: int, eta: float,
                                 floor: Optional[float] = None,
                                 mode: str = "closed_form") -> Tuple[float, list]:
    """Fraction of trials where the grand coalition is a Nash equilibrium.

    Returns (fraction, failures) with failures as (trial, estimates, witness).
    Every failure is also logged with its witness.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if noise_model not in NOISE_MODELS:
        raise ConfigError(f"unknown noise model {noise_model!r}")
    q_floor(env, floor)
    hits, failures = nash_trial_outcomes(pool, env, noise_model, 0, trials, seed, eta,
                                         floor, mode)
    for trial, _, witness in failures:
        log.warning("trial %d: grand coalition not Nash, witness %s", trial, witness)
    return hits / trials, failures


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> Tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)
