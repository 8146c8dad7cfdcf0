"""Slow, independent reference implementations used to freeze expected values.

Nothing here imports the package's solvers: each oracle recomputes its
quantity from first principles with plain loops or dense grids.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def outside_utility_value(theta, n, alpha, beta, gamma, a, c, r_star=0.0):
    return -a * (r_star + 2 * (alpha * (1 + n) ** (-gamma) + beta + theta)) - c * n


def outside_argmax_grid(alpha, beta, gamma, a, c, theta, lo, hi, step):
    grid = np.arange(lo, hi + step / 2, step)
    vals = outside_utility_value(theta, grid, alpha, beta, gamma, a, c)
    return float(grid[int(np.argmax(vals))])


def golden_section_max(f, lo, hi, tol=1e-10):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = f(x1)
    return (a + b) / 2


def relaxed_total_minimiser(size, alpha, beta, gamma, a, c, hi=1e4):
    """argmin over N of  a*size*2*alpha*(1+N)^-gamma + c*N  by golden section."""
    return golden_section_max(
        lambda n: -(a * size * 2 * alpha * (1 + n) ** (-gamma) + c * n), 0.0, hi, 1e-11)


def erm_naive(x, y):
    """Minimum 0-1 empirical risk over thresholds, by trying every cut."""
    x = list(map(float, x))
    y = list(map(int, y))
    xs = sorted(set(x))
    cands = [-math.inf] + [(u + v) / 2 for u, v in zip(xs, xs[1:])] + [math.inf]
    best = math.inf
    for s in cands:
        for sigma in (1, -1):
            errs = sum(1 for xi, yi in zip(x, y) if sigma * (1 if xi - s >= 0 else -1) != yi)
            best = min(best, errs / len(x))
    return best


def sup_scan_naive(xj, yj, x0, y0):
    xs = sorted(set(map(float, xj)) | set(map(float, x0)))
    cands = [-math.inf] + [(u + v) / 2 for u, v in zip(xs, xs[1:])] + [math.inf]
    best = 0.0
    for s in cands:
        for sigma in (1, -1):
            def risk(xx, yy):
                return sum(1 for xi, yi in zip(xx, yy)
                           if sigma * (1 if xi - s >= 0 else -1) != yi) / len(xx)
            best = max(best, abs(risk(xj, yj) - risk(x0, y0)))
    return best


def rademacher_naive(xs):
    """Average over all 2^n sign vectors of the sup correlation, double loop."""
    xs = list(map(float, xs))
    n = len(xs)
    distinct = sorted(set(xs))
    cands = [-math.inf] + [(u + v) / 2 for u, v in zip(distinct, distinct[1:])] + [math.inf]
    total = 0
    for signs in itertools.product((-1, 1), repeat=n):
        best = None
        for s in cands:
            for sigma in (1, -1):
                corr = sum(si * sigma * (1 if xi - s >= 0 else -1) for si, xi in zip(signs, xs))
                best = corr if best is None else max(best, corr)
        total += best
    # Integer accumulation and a single division, so equality can be exact.
    return total / (2 ** n * n)


def population_type_grid(t_star, flip_prob, points=10_001):
    """sup over a threshold grid of |R_p(g) - R_0(g)| for uniform features.

    Clean risk of the +1 classifier at s is |s - t_star|; noise at rate p
    maps a risk r to (1 - 2p) r + p; orientation -1 maps r to 1 - r.
    """
    s = np.linspace(0.0, 1.0, points)
    best = 0.0
    for clean in (np.abs(s - t_star), 1 - np.abs(s - t_star)):
        noisy = (1 - 2 * flip_prob) * clean + flip_prob
        best = max(best, float(np.max(np.abs(noisy - clean))))
    return best


def grid_optimal_welfare(thetas, alpha, beta, gamma, a, c, step, cap):
    """Exhaustive grand-coalition welfare over a contribution grid, with
    participation constraints; loops over every grid vector."""
    n_out = (2 * a * gamma * alpha / c) ** (1 / (gamma + 1)) - 1
    outs = [outside_utility_value(t, n_out, alpha, beta, gamma, a, c) for t in thetas]
    grid = np.arange(0.0, cap + step / 2, step)
    best = -math.inf
    for n in itertools.product(grid, repeat=len(thetas)):
        total = sum(n)
        if total <= 0:
            continue
        vt = sum(ni * ti for ni, ti in zip(n, thetas)) / total
        eps = 2 * (alpha * (1 + total) ** (-gamma) + beta + vt)
        u = [-a * eps - c * ni for ni in n]
        if all(ui >= oi - 1e-12 for ui, oi in zip(u, outs)):
            best = max(best, sum(u))
    return best
