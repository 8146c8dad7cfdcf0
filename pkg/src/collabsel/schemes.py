"""Full-information contribution schemes.

Three solvers share one result type:

* ``closed_form``: the simplified scheme, total fixed at the relaxed optimum
  ``N_bar`` and contributions ``N_bar/L + (2a/c)(theta_j - mean_L)``;
* ``binding_fixed_point``: contributors ask exactly their participation
  maximum, found by iterating on (vartheta, N);
* ``brute_force``: grid enumeration of the constrained welfare problem,
  used as an oracle for J <= 4.

Solvers accept type vectors in any order. They sort stably, jitter exact
ties by 1e-12 per rank so the sorted vector is strict, and return
contributions in the caller's original order.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq, minimize

from .econ import (
    AgentPool,
    ContributionScheme,
    LearningEnv,
    max_contributions,
    outside_sample_count,
    outside_utility,
    utilities,
    welfare,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    InfeasibleContributorCountError,
    SizeRefusalError,
)

log = logging.getLogger(__name__)

MODES = ("closed_form", "binding_fixed_point", "brute_force")
TIE_JITTER = 1e-12
DAMPING = 0.5
MAX_ITER = 10_000
FP_TOL = 1e-13
BRUTE_FORCE_MAX_J = 4


@dataclass(frozen=True)
class SchemeSolution:
    scheme: ContributionScheme
    mode: str
    residual: float
    consistent: bool

    @property
    def n(self) -> np.ndarray:
        return self.scheme.n

    @property
    def l_star(self) -> int:
        return self.scheme.l_star


def target_total_samples(coalition_size: int, env: LearningEnv) -> float:
    """Minimiser of the relaxed social cost for a coalition of the given size."""
    if coalition_size < 1:
        raise ConfigError("coalition_size must be >= 1")
    n_out = outside_sample_count(env)
    return float((n_out + 1) * coalition_size ** (1 / (1 + env.gamma)) - 1)


def relaxed_cost(big_n, coalition_size: int, env: LearningEnv):
    """The part of the social cost that depends on N only."""
    big_n = np.asarray(big_n, dtype=float)
    return (env.a * coalition_size
            * (env.r_star + 2 * env.alpha_delta * (1 + big_n) ** (-env.gamma) + 2 * env.beta)
            + env.c * big_n)


def _sorted_strict(types) -> Tuple[np.ndarray, np.ndarray]:
    """Stable ascending sort; exact ties pushed apart by TIE_JITTER per rank."""
    t = np.asarray(types, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ConfigError("need a nonempty type vector")
    order = np.argsort(t, kind="stable")
    s = t[order].copy()
    for i in range(1, s.size):
        if s[i] <= s[i - 1]:
            s[i] = s[i - 1] + TIE_JITTER
    return s, order


def _unsort(values: np.ndarray, order: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    out[order] = values
    return out


def closed_form_contributions(types_sorted: np.ndarray, l: int, env: LearningEnv) -> np.ndarray:
    size = types_sorted.size
    n_bar = target_total_samples(size, env)
    n = np.zeros(size)
    head = types_sorted[:l]
    n[:l] = n_bar / l + env.ratio * (head - head.mean())
    return n


def _crossing_index(n_max: np.ndarray, target: float) -> Optional[int]:
    """1-based index of the first prefix sum of ``n_max`` reaching ``target``."""
    cums = np.cumsum(n_max)
    hit = np.nonzero(cums >= target - 1e-9 * max(1.0, abs(target)))[0]
    return int(hit[0]) + 1 if hit.size else None


def _closed_form_residual(types_sorted, n, env) -> float:
    total = n.sum()
    vt = float(n @ types_sorted / total)
    n_max = max_contributions(vt, total, types_sorted, env)
    contrib = n > 0
    return float(np.max(np.abs(n[contrib] - n_max[contrib])))


def select_contributor_count(types, env: LearningEnv) -> Tuple[int, bool]:
    """Smallest L whose closed-form scheme is nonnegative and self-consistent.

    Consistency means the prefix sums of the participation maxima, evaluated at
    that scheme, first reach N_bar exactly at index L. When no L qualifies the
    largest L with nonnegative contributions is returned, flagged False.
    """
    s, _ = _sorted_strict(types)
    size = s.size
    n_bar = target_total_samples(size, env)
    fallback = 1
    for l in range(1, size + 1):
        n = closed_form_contributions(s, l, env)
        if np.any(n[:l] < 0):
            continue
        fallback = l
        vt = float(n @ s / n_bar)
        n_max = max_contributions(vt, n_bar, s, env)
        if _crossing_index(n_max, n_bar) == l:
            return l, True
    return fallback, False


def simplified_scheme(types, env: LearningEnv) -> SchemeSolution:
    s, order = _sorted_strict(types)
    l, ok = select_contributor_count(s, env)
    if not ok:
        log.info("no self-consistent contributor count for %s; fallback L=%d", s, l)
    n = closed_form_contributions(s, l, env)
    residual = _closed_form_residual(s, n, env)
    scheme = ContributionScheme(np.ones(s.size, dtype=int), _unsort(n, order))
    return SchemeSolution(scheme, "closed_form", residual, ok)


def simplified_contributions_batch(types, env: LearningEnv) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise :func:`simplified_scheme` for a (T, J) array of type vectors.

    Returns (n, l, ok), with ``n`` in each row's original order. Results match
    the scalar solver exactly; it exists because Monte Carlo runs need
    millions of solves.
    """
    t = np.asarray(types, dtype=float)
    if t.ndim != 2 or t.shape[1] == 0:
        raise ConfigError("need a (T, J) array of type vectors")
    rows, size = t.shape
    order = np.argsort(t, axis=1, kind="stable")
    s = np.take_along_axis(t, order, axis=1).copy()
    for i in range(1, size):
        s[:, i] = np.where(s[:, i] <= s[:, i - 1], s[:, i - 1] + TIE_JITTER, s[:, i])
    n_bar = target_total_samples(size, env)
    k = env.ratio
    head_means = np.cumsum(s, axis=1) / np.arange(1, size + 1)
    cols = np.arange(size)
    tol = 1e-9 * max(1.0, abs(n_bar))
    chosen = np.zeros(rows, dtype=int)
    fallback = np.ones(rows, dtype=int)
    for l in range(1, size + 1):
        n = np.where(cols < l, n_bar / l + k * (s - head_means[:, l - 1:l]), 0.0)
        nonneg = np.all(n[:, :l] >= 0, axis=1)
        fallback = np.where(nonneg, l, fallback)
        vt = np.einsum("ij,ij->i", n, s) / n_bar
        n_max = max_contributions(vt[:, None], n_bar, s, env)
        reached = np.cumsum(n_max, axis=1) >= n_bar - tol
        first = np.where(reached.any(axis=1), np.argmax(reached, axis=1) + 1, 0)
        chosen = np.where((chosen == 0) & nonneg & (first == l), l, chosen)
    ok = chosen > 0
    l_final = np.where(ok, chosen, fallback)
    means = np.take_along_axis(head_means, (l_final - 1)[:, None], axis=1)
    n_sorted = np.where(cols < l_final[:, None], n_bar / l_final[:, None] + k * (s - means), 0.0)
    n_out = np.empty_like(n_sorted)
    np.put_along_axis(n_out, order, n_sorted, axis=1)
    return n_out, l_final, ok


def _binding_total(vartheta: float, head: np.ndarray, env: LearningEnv) -> float:
    """Largest N with N = sum of participation maxima of ``head`` at vartheta.

    The defect h(N) is convex with its minimum at the relaxed optimum for
    |head| agents, so the attracting root lies to the right of it.
    """
    l = head.size
    n_out = outside_sample_count(env)
    k = env.ratio
    base = env.alpha_delta * (1 + n_out) ** (-env.gamma)

    def h(big_n):
        return (big_n - l * n_out
                + k * l * (env.alpha_delta * (1 + big_n) ** (-env.gamma) - base)
                + k * (l * vartheta - head.sum()))

    lo = target_total_samples(l, env)
    h_lo = h(lo)
    scale = max(1.0, lo)
    if h_lo > 1e-12 * scale:
        raise InfeasibleContributorCountError(
            f"no binding total for l={l}: coalition average {vartheta:.6g} too high"
        )
    if h_lo >= -1e-12 * scale:
        return lo
    hi = max(2 * lo, lo + 1)
    while h(hi) <= 0:
        hi *= 2
    return float(brentq(h, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))


def _binding_sorted(s: np.ndarray, l: int, env: LearningEnv) -> Tuple[np.ndarray, float]:
    if not 1 <= l <= s.size:
        raise ConfigError(f"l must lie in [1, {s.size}]")
    head = s[:l]
    vt = float(head.mean())
    big_n = None
    for _ in range(MAX_ITER):
        big_n = _binding_total(vt, head, env)
        n_head = max_contributions(vt, big_n, head, env)
        vt_new = float(n_head @ head / n_head.sum())
        step = DAMPING * (vt_new - vt)
        vt += step
        if abs(step) < FP_TOL:
            break
    else:
        raise ConvergenceError(f"binding fixed point did not converge for l={l}",
                               residual=abs(step))
    big_n = _binding_total(vt, head, env)
    n = np.zeros(s.size)
    n[:l] = max_contributions(vt, big_n, head, env)
    if np.any(n[:l] < -1e-9):
        raise InfeasibleContributorCountError(
            f"binding scheme for l={l} requires a negative contribution"
        )
    n[:l] = np.clip(n[:l], 0.0, None)
    total = n.sum()
    vt_final = float(n @ s / total)
    residual = float(np.max(np.abs(n[:l] - max_contributions(vt_final, total, head, env))))
    return n, residual


def binding_fixed_point_scheme(types, l: int, env: LearningEnv) -> SchemeSolution:
    s, order = _sorted_strict(types)
    n, residual = _binding_sorted(s, l, env)
    scheme = ContributionScheme(np.ones(s.size, dtype=int), _unsort(n, order))
    return SchemeSolution(scheme, "binding_fixed_point", residual, True)


def binding_scheme(types, env: LearningEnv) -> SchemeSolution:
    """Binding scheme at the closed-form contributor count.

    If that count admits no nonnegative binding solution, the count is reduced
    until one exists (l = 1 always does: the lone contributor asks n_out).
    """
    s, order = _sorted_strict(types)
    l, ok = select_contributor_count(s, env)
    while True:
        try:
            n, residual = _binding_sorted(s, l, env)
            break
        except InfeasibleContributorCountError:
            if l == 1:
                raise
            l -= 1
            ok = False
    scheme = ContributionScheme(np.ones(s.size, dtype=int), _unsort(n, order))
    return SchemeSolution(scheme, "binding_fixed_point", residual, ok)


def solve_scheme(types, env: LearningEnv, mode: str = "closed_form") -> SchemeSolution:
    if mode == "closed_form":
        return simplified_scheme(types, env)
    if mode == "binding_fixed_point":
        return binding_scheme(types, env)
    raise ConfigError(f"unknown scheme mode {mode!r}")


def oracle_cap(env: LearningEnv) -> float:
    """Upper bound on any participation maximum, plus a 10% margin."""
    n_out = outside_sample_count(env)
    bound = (n_out + env.ratio * env.alpha_delta * (1 + n_out) ** (-env.gamma)
             + env.ratio * (env.theta_max - env.theta_min))
    return 1.1 * bound


def brute_force_optimal_scheme(pool: AgentPool, env: LearningEnv,
                               grid_step: float = 0.25) -> SchemeSolution:
    j_count = pool.size
    if j_count > BRUTE_FORCE_MAX_J:
        raise SizeRefusalError(f"brute force limited to J <= {BRUTE_FORCE_MAX_J}")
    if grid_step <= 0:
        raise ConfigError("grid_step must be positive")
    thetas = pool.thetas
    grid = np.arange(0.0, oracle_cap(env) + grid_step / 2, grid_step)
    outs = np.asarray(outside_utility(thetas, env), dtype=float)

    # Larger coalitions first so that welfare ties resolve toward inclusion;
    # the empty coalition is scored last.
    candidates = sorted(itertools.product((0, 1), repeat=j_count),
                        key=lambda b: (-sum(b), tuple(-x for x in b)))
    best_w = -np.inf
    best = None
    for b in candidates:
        b = np.array(b, dtype=int)
        members = np.nonzero(b)[0]
        if members.size == 0:
            if float(outs.sum()) > best_w:
                best_w = float(outs.sum())
                best = (b, np.zeros(j_count))
            continue
        # Slice along the first member's grid to bound memory at J = 4.
        rest = members.size - 1
        tail = (np.stack([m.ravel() for m in np.meshgrid(*([grid] * rest), indexing="ij")],
                         axis=1) if rest else np.zeros((1, 0)))
        others = outs[b == 0].sum()
        for first in grid:
            cols = np.column_stack([np.full(tail.shape[0], first), tail])
            total = cols.sum(axis=1)
            ok = total > 0
            cols, total = cols[ok], total[ok]
            if total.size == 0:
                continue
            vt = cols @ thetas[members] / total
            eps = 2 * (env.alpha_delta * (1 + total) ** (-env.gamma) + env.beta + vt)
            inside = -env.a * (env.r_star + eps)[:, None] - env.c * cols
            feasible = np.all(inside >= outs[members] - 1e-12, axis=1)
            if not feasible.any():
                continue
            w = np.where(feasible, inside.sum(axis=1) + others, -np.inf)
            i = int(np.argmax(w))
            if w[i] > best_w:
                best_w = float(w[i])
                n = np.zeros(j_count)
                n[members] = cols[i]
                best = (b, n)
    scheme = ContributionScheme(*best)
    return SchemeSolution(scheme, "brute_force", grid_step, True)


def continuous_optimal_scheme(pool: AgentPool, env: LearningEnv) -> SchemeSolution:
    """Grand-coalition welfare maximum over real contributions.

    SLSQP under the participation constraints, started from the simplified
    and binding schemes; the better feasible end point wins. Local, but it
    matches the grid oracle wherever that one can run, and it scales to J
    far beyond the oracle's reach. ``residual`` holds the worst constraint
    violation (0 when feasible).
    """
    thetas = pool.thetas
    outs = np.asarray(outside_utility(thetas, env), dtype=float)

    def member_utils(n):
        total = max(float(n.sum()), 1e-12)
        vt = float(n @ thetas) / total
        eps = 2 * (env.alpha_delta * (1 + total) ** (-env.gamma) + env.beta + vt)
        return -env.a * (env.r_star + eps) - env.c * n

    starts = [simplified_scheme(thetas, env).n]
    try:
        starts.append(binding_scheme(thetas, env).n)
    except (ConvergenceError, InfeasibleContributorCountError):
        pass
    best = None
    for x0 in starts:
        res = minimize(lambda n: -member_utils(n).sum(), np.asarray(x0) + 1e-6,
                       method="SLSQP", bounds=[(0.0, None)] * thetas.size,
                       constraints=[{"type": "ineq", "fun": lambda n: member_utils(n) - outs}],
                       options={"ftol": 1e-12, "maxiter": 1000})
        n = np.clip(res.x, 0.0, None)
        violation = float(max(0.0, np.max(outs - member_utils(n))))
        value = float(member_utils(n).sum())
        if best is None or (violation, -value) < (best[1], -best[2]):
            best = (n, violation, value)
    scheme = ContributionScheme(np.ones(thetas.size, dtype=int), best[0])
    return SchemeSolution(scheme, "continuous", best[1], best[1] <= 1e-7)


def welfare_gap(pool: AgentPool, env: LearningEnv, grid_step: float = 0.25,
                oracle: str = "brute_force") -> float:
    """Optimal welfare minus simplified-scheme welfare.

    ``oracle`` is ``brute_force`` (grid search, J <= 4) or ``continuous``.
    """
    if oracle == "brute_force":
        best = brute_force_optimal_scheme(pool, env, grid_step)
    elif oracle == "continuous":
        best = continuous_optimal_scheme(pool, env)
    else:
        raise ConfigError(f"unknown oracle {oracle!r}")
    simple = simplified_scheme(pool.thetas, env)
    return welfare(best.scheme, pool, env) - welfare(simple.scheme, pool, env)


def participation_margins(solution: SchemeSolution, pool: AgentPool,
                          env: LearningEnv) -> np.ndarray:
    """u_j - o(theta_j) for every agent under ``solution``."""
    return utilities(solution.scheme, pool, env) - np.asarray(
        outside_utility(pool.thetas, env), dtype=float)
