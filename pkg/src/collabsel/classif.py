"""Threshold-classifier sandbox for estimating data quality from samples.

Labels live in {-1, +1}. The hypothesis class is every ``x -> sigma *
sign(x - s)`` with ``sign(0) = +1``, which is closed under negation. On a
finite sample only the position of ``s`` among the distinct x-values matters,
so every optimisation here scans the midpoints between consecutive distinct
values plus the two infinite sentinels.

Error counts are kept as integers until the final division, which makes the
sup-scan and label-flip divergence estimators agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .econ import LearningEnv
from .errors import ConfigError

EXACT_RADEMACHER_MAX_N = 20
RADEMACHER_MC_DRAWS = 100_000
_ENUM_CHUNK = 1 << 15


@dataclass(frozen=True)
class ThresholdClassifier:
    s: float
    sigma: int = 1

    def __post_init__(self):
        if self.sigma not in (-1, 1):
            raise ConfigError("orientation must be -1 or +1")
        if math.isnan(self.s):
            raise ConfigError("threshold must not be NaN")

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.sigma * np.where(x - self.s >= 0, 1, -1)

    def negated(self) -> "ThresholdClassifier":
        return ThresholdClassifier(self.s, -self.sigma)


@dataclass(frozen=True)
class LabeledSamples:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=int).reshape(-1)
        if x.shape != y.shape:
            raise ConfigError("x and y must have the same length")
        if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
            raise ConfigError("features must lie in [0, 1]")
        if np.any((y != -1) & (y != 1)):
            raise ConfigError("labels must be -1 or +1")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return int(self.x.size)

    def flipped(self) -> "LabeledSamples":
        return LabeledSamples(self.x, -self.y)


@dataclass(frozen=True)
class SyntheticAgentDist:
    """Uniform features, threshold labels at ``t_star``, flipped w.p. ``flip_prob``."""

    t_star: float = 0.5
    flip_prob: float = 0.0

    def __post_init__(self):
        if not 0 <= self.t_star <= 1:
            raise ConfigError("t_star must lie in [0, 1]")
        if not 0 <= self.flip_prob < 0.5:
            raise ConfigError("flip_prob must lie in [0, 1/2)")


def sample(dist: SyntheticAgentDist, n: int, seed: int, index: Sequence[int] = ()) -> LabeledSamples:
    """Draw ``n`` labelled points; the stream is fixed by (seed, *index)."""
    if n < 0:
        raise ConfigError("n must be >= 0")
    rng = np.random.default_rng([int(seed), *(int(i) for i in index)])
    x = rng.uniform(0.0, 1.0, size=n)
    y = np.where(x - dist.t_star >= 0, 1, -1)
    flips = rng.random(n) < dist.flip_prob
    return LabeledSamples(x, np.where(flips, -y, y))


def true_type(dist: SyntheticAgentDist) -> float:
    """Largest risk gap to the clean distribution.

    Label noise at rate p maps R0 to (1-2p)R0 + p, so the gap p|1-2R0| peaks
    at the clean Bayes classifier, where R0 = 0.
    """
    return float(dist.flip_prob)


def error_count(g: ThresholdClassifier, samples: LabeledSamples) -> int:
    """Number of misclassified points; exact, so err(-g) = n - err(g)."""
    return int(np.count_nonzero(g.predict(samples.x) != samples.y))


def empirical_risk(g: ThresholdClassifier, samples: LabeledSamples) -> float:
    if len(samples) == 0:
        raise ConfigError("empty sample")
    return error_count(g, samples) / len(samples)


# Threshold scanning ---------------------------------------------------------

def _cuts(*sets: LabeledSamples) -> np.ndarray:
    return np.unique(np.concatenate([s.x for s in sets]))


def _plus_errors(samples: LabeledSamples, cuts: np.ndarray) -> np.ndarray:
    """Error counts of the +1-oriented classifier at every cut position.

    Position k puts the threshold just above ``cuts[k-1]``: k = 0 is the
    -inf sentinel and k = len(cuts) the +inf sentinel.
    """
    m = cuts.size
    idx = np.searchsorted(cuts, samples.x, side="left")
    pos = np.bincount(idx[samples.y == 1], minlength=m)
    neg = np.bincount(idx[samples.y == -1], minlength=m)
    pos_below = np.concatenate(([0], np.cumsum(pos)))
    neg_below = np.concatenate(([0], np.cumsum(neg)))
    return pos_below + (neg_below[-1] - neg_below)


def _threshold_at(cuts: np.ndarray, k: int) -> float:
    if k == 0:
        return -math.inf
    if k == cuts.size:
        return math.inf
    return float((cuts[k - 1] + cuts[k]) / 2)


def erm_fit(samples: LabeledSamples) -> Tuple[ThresholdClassifier, float]:
    """Exact 0-1 empirical risk minimiser over the threshold class.

    Ties go to the smaller threshold, then to orientation +1.
    """
    n = len(samples)
    if n == 0:
        raise ConfigError("ERM needs at least one sample")
    cuts = _cuts(samples)
    plus = _plus_errors(samples, cuts)
    minus = n - plus
    best = min(int(plus.min()), int(minus.min()))
    k_plus = int(np.argmax(plus == best)) if (plus == best).any() else None
    k_minus = int(np.argmax(minus == best)) if (minus == best).any() else None
    if k_minus is None or (k_plus is not None and k_plus <= k_minus):
        k, sigma = k_plus, 1
    else:
        k, sigma = k_minus, -1
    return ThresholdClassifier(_threshold_at(cuts, k), sigma), best / n


def _check_pair(samples_j: LabeledSamples, samples_0: LabeledSamples):
    if len(samples_j) == 0 or len(samples_0) == 0:
        raise ConfigError("both sample sets must be nonempty")


def h_divergence_sup_scan(samples_j: LabeledSamples, samples_0: LabeledSamples) -> float:
    """sup_g |R_j(g) - R_0(g)| on the empirical measures."""
    _check_pair(samples_j, samples_0)
    q, q0 = len(samples_j), len(samples_0)
    cuts = _cuts(samples_j, samples_0)
    # Negating g negates the gap, so |.| covers both orientations.
    gap = _plus_errors(samples_j, cuts) * q0 - _plus_errors(samples_0, cuts) * q
    return int(np.abs(gap).max()) / (q * q0)


def h_divergence_label_flip(samples_j: LabeledSamples, samples_0: LabeledSamples) -> float:
    """1 - inf_g [R_0(g) + R_j'(g)], where j' is j with every label flipped."""
    _check_pair(samples_j, samples_0)
    q, q0 = len(samples_j), len(samples_0)
    flipped = samples_j.flipped()
    cuts = _cuts(flipped, samples_0)
    e0 = _plus_errors(samples_0, cuts)
    ef = _plus_errors(flipped, cuts)
    # Each risk keeps its own denominator; scale both to q * q0.
    sums = np.concatenate((e0 * q + ef * q0, (q0 - e0) * q + (q - ef) * q0))
    return (q * q0 - int(sums.min())) / (q * q0)


# Rademacher complexity ------------------------------------------------------

def _sup_correlation(signs: np.ndarray) -> np.ndarray:
    """Row-wise sup_g sum_i sigma_i g(x_i) for points in sorted order."""
    total = signs.sum(axis=1, keepdims=True)
    below = np.concatenate((np.zeros((signs.shape[0], 1), dtype=np.int64),
                            np.cumsum(signs, axis=1)), axis=1)
    return np.abs(total - 2 * below).max(axis=1)


def _grouped_signs(signs: np.ndarray, counts: np.ndarray) -> np.ndarray:
    # Tied points share g(x), so only their summed signs matter.
    if np.all(counts == 1):
        return signs
    edges = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return np.add.reduceat(signs, edges, axis=1)


def _rademacher_enumerate(counts: Tuple[int, ...]) -> float:
    counts = np.asarray(counts)
    n = int(counts.sum())
    powers = np.int64(1) << np.arange(n, dtype=np.int64)
    acc = 0
    for start in range(0, 1 << n, _ENUM_CHUNK):
        ids = np.arange(start, min(1 << n, start + _ENUM_CHUNK), dtype=np.int64)
        signs = np.where((ids[:, None] & powers) != 0, 1, -1).astype(np.int64)
        acc += int(_sup_correlation(_grouped_signs(signs, counts)).sum())
    return acc / ((1 << n) * n)


def _rademacher_mc(counts: Tuple[int, ...], draws: int, seed: int) -> float:
    counts = np.asarray(counts)
    n = int(counts.sum())
    rng = np.random.default_rng([int(seed), n])
    acc = 0
    for start in range(0, draws, _ENUM_CHUNK):
        rows = min(_ENUM_CHUNK, draws - start)
        signs = rng.choice(np.array([-1, 1], dtype=np.int64), size=(rows, n))
        acc += int(_sup_correlation(_grouped_signs(signs, counts)).sum())
    return acc / (draws * n)


@lru_cache(maxsize=256)
def _rademacher_cached(counts: Tuple[int, ...], draws: int, seed: int) -> float:
    if sum(counts) <= EXACT_RADEMACHER_MAX_N:
        return _rademacher_enumerate(counts)
    return _rademacher_mc(counts, draws, seed)


def rademacher_exact(xs, draws: int = RADEMACHER_MC_DRAWS, seed: int = 0) -> float:
    """Empirical Rademacher complexity of the threshold class on ``xs``.

    Exact enumeration of all sign vectors for up to 20 points; a seeded
    Monte Carlo average with ``draws`` sign vectors beyond that. The value
    depends only on the multiplicities of the sorted distinct points.
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    if xs.size == 0:
        raise ConfigError("need at least one point")
    _, counts = np.unique(xs, return_counts=True)
    return _rademacher_cached(tuple(int(c) for c in counts), int(draws), int(seed))


# Error bound and coverage ---------------------------------------------------

def pac_alpha(env: LearningEnv, delta: float) -> float:
    """PAC constant at confidence ``delta`` for the classification presets.

    Other environments carry no confidence dependence, so their own
    ``alpha_delta`` is returned unchanged.
    """
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    if env.pac_preset == "classif_unitrate":
        return math.sqrt(math.log(1 / delta))
    if env.pac_preset == "classif_halfrate":
        return math.sqrt(math.log(1 / delta) / 2)
    return env.alpha_delta


def eta_bound(q: float, q_prime: float, env: LearningEnv, j_count: int = 1) -> float:
    """Bound on |estimate - type| holding for all ``j_count`` agents at once
    with probability 1 - delta.

    For the classification presets ``env.beta`` already stores twice the
    Rademacher complexity, and it enters the bound once. Other environments
    add ``2 * beta``.
    """
    if q < 0 or q_prime < 0:
        raise ConfigError("sample counts must be >= 0")
    if j_count < 1:
        raise ConfigError("j_count must be >= 1")
    alpha = pac_alpha(env, env.delta / (4 * j_count))
    stat = alpha * ((q + 1) ** (-env.gamma) + (q_prime + 1) ** (-env.gamma))
    bias = env.beta if env.pac_preset in ("classif_unitrate", "classif_halfrate") else 2 * env.beta
    return float(stat + bias)


@dataclass(frozen=True)
class EstimationReport:
    trial: int
    agent: int
    theta: float
    theta_hat: float
    eta: float
    within: bool
    q: int
    q_prime: int

    def as_row(self) -> dict:
        return {"trial": self.trial, "agent": self.agent, "theta": self.theta,
                "theta_hat": self.theta_hat, "eta": self.eta,
                "within": int(self.within), "q": self.q, "q_prime": self.q_prime}


def coverage_experiment(dists: Sequence[SyntheticAgentDist], q: int, q_prime: int,
                        env: LearningEnv, trials: int, seed: int,
                        j_count: int = 1,
                        eta: Optional[float] = None,
                        start: int = 0) -> List[EstimationReport]:
    """Repeatedly estimate every agent's type and compare with the bound.

    When ``eta`` is None the bound is recomputed each trial with beta set to
    twice the empirical Rademacher complexity of that trial's clean sample.
    All agents share the clean threshold of ``dists[0]``. Trials are
    numbered from ``start``, so chunks of a long run can be computed apart.
    """
    if q < 1 or q_prime < 1:
        raise ConfigError("q and q_prime must be >= 1")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if not dists:
        raise ConfigError("need at least one agent distribution")
    clean = SyntheticAgentDist(dists[0].t_star, 0.0)
    rows = []
    for trial in range(start, start + trials):
        s0 = sample(clean, q_prime, seed, (trial, 0))
        if eta is None:
            trial_env = replace(env, beta=2 * rademacher_exact(s0.x, seed=seed))
            bound = eta_bound(q, q_prime, trial_env, j_count)
        else:
            bound = float(eta)
        for j, dist in enumerate(dists):
            sj = sample(dist, q, seed, (trial, j + 1))
            est = h_divergence_label_flip(sj, s0)
            theta = true_type(dist)
            rows.append(EstimationReport(trial, j, theta, est, bound,
                                         abs(est - theta) <= bound, q, q_prime))
    return rows


def coverage_fraction(rows: Sequence[EstimationReport]) -> float:
    if not rows:
        raise ConfigError("no estimation rows")
    return sum(r.within for r in rows) / len(rows)
