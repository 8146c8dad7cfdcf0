"""Experiment dispatch. Each experiment returns the files it wants written;
nothing touches the disk until every computation has succeeded."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .. import classif, game, mechanisms, schemes
from ..econ import (
    AgentPool,
    LearningEnv,
    classif_env,
    outside_sample_count,
    outside_utility,
    utilities,
    welfare,
)
from ..errors import (
    ConfigError,
    ConvergenceError,
    InfeasibleContributorCountError,
    InfeasibleVerificationError,
    SizeRefusalError,
)
from .output import csv_text, dump_json, write_atomically
from .scenario import Scenario, build_env, build_pool

log = logging.getLogger(__name__)

Files = Dict[str, str]


def pmap(fn: Callable, items: Sequence, workers: int) -> list:
    """Ordered map; a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(_star, [(fn, it) for it in items]))


def _star(job):
    fn, args = job
    return fn(*args)


def _chunks(total: int, parts: int):
    parts = max(1, min(parts, total))
    edges = np.linspace(0, total, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


class Context:
    def __init__(self, scenario: Scenario, workers: int):
        self.scenario = scenario
        self.workers = max(1, int(workers))
        self.env = build_env(scenario.env)
        self.derived: dict = {"n_out": outside_sample_count(self.env),
                              "ratio_2a_over_c": self.env.ratio}
        try:
            self.derived["q_floor"] = mechanisms.q_floor(self.env, scenario.mc.q_floor)
        except InfeasibleVerificationError:
            self.derived["q_floor"] = None

    @property
    def seed(self) -> Optional[int]:
        return self.scenario.mc.seed

    def pool(self, count: Optional[int] = None) -> AgentPool:
        return build_pool(self.scenario.pool, self.env, self.seed, count)

    def meta(self) -> dict:
        return {"scenario": self.scenario.resolved(), "derived": self.derived}

    def csv(self, header, rows) -> str:
        return csv_text(self.meta(), header, rows)

    def describe_pool(self, pool: AgentPool) -> None:
        j = pool.size
        self.derived["J"] = j
        self.derived["thetas"] = pool.thetas.tolist()
        self.derived["n_bar"] = schemes.target_total_samples(j, self.env)
        l_star, ok = schemes.select_contributor_count(pool.thetas, self.env)
        self.derived["l_star"] = l_star
        self.derived["l_star_consistent"] = ok


# Experiments ----------------------------------------------------------------------

def run_scheme(ctx: Context) -> tuple:
    env, sc = ctx.env, ctx.scenario
    pool = ctx.pool()
    ctx.describe_pool(pool)
    outs = np.asarray(outside_utility(pool.thetas, env), dtype=float)
    solutions = {"closed_form": schemes.simplified_scheme(pool.thetas, env)}
    try:
        solutions["binding_fixed_point"] = schemes.binding_scheme(pool.thetas, env)
    except (ConvergenceError, InfeasibleContributorCountError) as exc:
        log.warning("binding scheme unavailable: %s", exc)
    oracle = sc.solver.oracle
    if oracle == "brute_force" and pool.size <= schemes.BRUTE_FORCE_MAX_J:
        solutions["oracle"] = schemes.brute_force_optimal_scheme(pool, env, sc.grids.grid_step)
    elif oracle in ("brute_force", "continuous") and pool.size > 1:
        solutions["oracle"] = schemes.continuous_optimal_scheme(pool, env)
    names = list(solutions)
    header = ["agent", "theta", "outside_utility"]
    for name in names:
        header += [f"n_{name}", f"utility_{name}", f"margin_{name}"]
    cols = {}
    for name, sol in solutions.items():
        u = utilities(sol.scheme, pool, env)
        cols[name] = (sol.n, u, u - outs)
    rows = []
    for j in range(pool.size):
        row = [j + 1, pool.thetas[j], outs[j]]
        for name in names:
            n, u, m = cols[name]
            row += [n[j], u[j], m[j]]
        rows.append(row)
    results = {name: {"welfare": welfare(sol.scheme, pool, env), "residual": sol.residual,
                      "contributors": sol.l_star, "consistent": sol.consistent,
                      "total_samples": sol.scheme.big_n, "mode": sol.mode}
               for name, sol in solutions.items()}
    if "oracle" in solutions:
        results["welfare_gap"] = results["oracle"]["welfare"] - results["closed_form"]["welfare"]
    return results, {"scheme.csv": ctx.csv(header, rows)}


def run_game(ctx: Context) -> tuple:
    env, sc = ctx.env, ctx.scenario
    pool = ctx.pool()
    ctx.describe_pool(pool)
    grid = game.declared_type_grid(env, sc.grids.declared_points)
    g = game.RevelationGame(pool, env, grid, sc.solver.game_mode)
    reports = g.enumerate_pure_nash(sc.solver.j_cap)
    header = ["profile"] + [f"action_{j + 1}" for j in range(pool.size)] + \
        ["coalition_shape", "max_gain"] + [f"payoff_{j + 1}" for j in range(pool.size)]
    rows = [[i] + [game.encode_action(a) for a in r.profile] + [r.coalition_shape, r.max_gain]
            + list(r.payoffs) for i, r in enumerate(reports)]
    start = game.truthful_profile(pool, grid)
    final, converged, trace = g.best_response_dynamics(start, sc.solver.max_rounds)
    trace_rows = [[rnd, agent + 1 if agent >= 0 else 0, game.encode_action(act), size]
                  for rnd, agent, act, size in trace]
    plot_rows = [["coalition_size", i, size] for i, (_, _, _, size) in enumerate(trace)]
    shapes = sorted({r.coalition_shape for r in reports})
    all_out = tuple([None] * pool.size)
    results = {
        "grid": list(grid),
        "equilibria": len(reports),
        "coalition_shapes": shapes,
        "all_out_is_nash": g.certify(all_out).is_nash,
        "dynamics": {"start": game.encode_profile(start), "final": game.encode_profile(final),
                     "converged": converged, "final_shape": game.coalition_shape(final),
                     "moves": len(trace) - 1},
    }
    files = {
        "equilibria.csv": ctx.csv(header, rows),
        "br_trace.csv": ctx.csv(["round", "agent", "action", "coalition_size"], trace_rows),
        "plot_br_trace.csv": ctx.csv(["series", "x", "y"], plot_rows),
    }
    return results, files


def run_vcg(ctx: Context) -> tuple:
    env, sc = ctx.env, ctx.scenario
    pool = ctx.pool()
    ctx.describe_pool(pool)
    sol = schemes.solve_scheme(pool.thetas, env, sc.solver.scheme_mode)
    t = mechanisms.vcg_transfers(pool.thetas, pool, env, sc.solver.scheme_mode)
    witness = mechanisms.check_positive_transfer(t)
    rows = [[j + 1, pool.thetas[j], sol.n[j], t[j], bool(-t[j] > 0)] for j in range(pool.size)]
    results = {"transfers": t.tolist(),
               "positive_transfer_agent": None if witness is None else witness + 1}
    return results, {"transfers.csv": ctx.csv(
        ["agent", "theta", "n", "transfer", "needs_payment"], rows)}


def _verify_chunk(thetas, env, noise, start, stop, seed, eta, floor, mode):
    return mechanisms.nash_trial_outcomes(AgentPool(thetas), env, noise, start, stop, seed,
                                          eta, floor, mode)


def _verify_eta(ctx: Context, pool: AgentPool) -> float:
    sc = ctx.scenario
    if sc.mc.eta is not None:
        return float(sc.mc.eta)
    qf = mechanisms.q_floor(ctx.env, sc.mc.q_floor)
    return classif.eta_bound(qf, sc.classif.q_prime, ctx.env, pool.size)


def _noise_models(sc: Scenario) -> List[str]:
    if sc.mc.noise_model == "both":
        return list(mechanisms.NOISE_MODELS)
    return [sc.mc.noise_model]


def _verify_runs(ctx: Context, pool: AgentPool, etas: Sequence[float]):
    sc = ctx.scenario
    floor = sc.mc.q_floor
    jobs, keys = [], []
    for eta in etas:
        for noise in _noise_models(sc):
            for a, b in _chunks(sc.mc.trials, ctx.workers):
                jobs.append((pool.thetas, ctx.env, noise, a, b, ctx.seed, eta, floor,
                             sc.solver.verify_mode))
                keys.append((eta, noise))
    outcomes = pmap(_verify_chunk, jobs, ctx.workers)
    merged: Dict[tuple, list] = {}
    for key, (hits, fails) in zip(keys, outcomes):
        acc = merged.setdefault(key, [0, []])
        acc[0] += hits
        acc[1].extend(fails)
    return merged


def run_verify(ctx: Context) -> tuple:
    sc = ctx.scenario
    pool = ctx.pool()
    ctx.describe_pool(pool)
    eta = _verify_eta(ctx, pool)
    ctx.derived["eta"] = eta
    merged = _verify_runs(ctx, pool, [eta])
    rows, fail_rows, fractions = [], [], {}
    for (e, noise), (hits, fails) in merged.items():
        frac = hits / sc.mc.trials
        lo, hi = mechanisms.wilson_interval(hits, sc.mc.trials)
        fractions[noise] = frac
        rows.append([noise, e, sc.mc.trials, frac, lo, hi, len(fails)])
        for trial, est, (agent, margin) in fails:
            log.warning("%s trial %d: grand coalition not Nash, agent %d short by %.6g",
                        noise, trial, agent + 1, -margin)
            fail_rows.append([noise, trial, agent + 1, margin] + list(est))
    results = {"eta": eta, "nash_fraction": min(fractions.values()),
               "nash_fraction_by_noise": fractions, "failures": len(fail_rows)}
    files = {
        "verify.csv": ctx.csv(["noise_model", "eta", "trials", "nash_fraction", "ci_low",
                               "ci_high", "failures"], rows),
        "failures.csv": ctx.csv(["noise_model", "trial", "agent", "margin"]
                                + [f"estimate_{j + 1}" for j in range(pool.size)], fail_rows),
    }
    return results, files


def _estimate_env(ctx: Context, preset: str) -> LearningEnv:
    return classif_env(preset, delta=ctx.env.delta, a=ctx.env.a, c=ctx.env.c)


def _estimate_chunk(dists, q, q_prime, env, trials, seed, j_count, start):
    return classif.coverage_experiment(dists, q, q_prime, env, trials, seed, j_count,
                                       start=start)


def _coverage(ctx: Context, q: int):
    sc = ctx.scenario
    cs = sc.classif
    env = _estimate_env(ctx, cs.preset)
    dists = [classif.SyntheticAgentDist(cs.t_star, p) for p in cs.flip_probs]
    jobs = [(dists, q, cs.q_prime, env, b - a, ctx.seed, cs.j_count, a)
            for a, b in _chunks(sc.mc.trials, ctx.workers)]
    rows = [r for part in pmap(_estimate_chunk, jobs, ctx.workers) for r in part]
    return rows


def run_estimate(ctx: Context) -> tuple:
    cs = ctx.scenario.classif
    rows = _coverage(ctx, cs.q)
    frac = classif.coverage_fraction(rows)
    errors = {}
    for j, p in enumerate(cs.flip_probs):
        errs = [abs(r.theta_hat - r.theta) for r in rows if r.agent == j]
        errors[str(j + 1)] = {"theta": p, "mean_abs_error": float(np.mean(errs)),
                              "max_abs_error": float(np.max(errs))}
    ctx.derived["eta_first_trial"] = rows[0].eta
    results = {"within_fraction": frac, "preset": cs.preset, "per_agent": errors}
    header = ["trial", "agent", "theta", "theta_hat", "eta", "within", "q", "q_prime"]
    body = [[r.trial, r.agent + 1, r.theta, r.theta_hat, r.eta, r.within, r.q, r.q_prime]
            for r in rows]
    return results, {"estimates.csv": ctx.csv(header, body)}


def _sweep_j_point(thetas, env, oracle, grid_step):
    pool = AgentPool(thetas)
    simple = schemes.simplified_scheme(pool.thetas, env)
    row = {"J": pool.size, "l_star": simple.l_star,
           "l_ratio": simple.l_star / pool.size ** (1 / (1 + env.gamma)),
           "welfare_simplified": welfare(simple.scheme, pool, env),
           "welfare_oracle": None, "welfare_gap": None}
    if oracle == "brute_force":
        best = schemes.brute_force_optimal_scheme(pool, env, grid_step)
    elif oracle == "continuous":
        best = schemes.continuous_optimal_scheme(pool, env)
    else:
        return row
    row["welfare_oracle"] = welfare(best.scheme, pool, env)
    row["welfare_gap"] = row["welfare_oracle"] - row["welfare_simplified"]
    return row


def run_sweep(ctx: Context) -> tuple:
    sc = ctx.scenario
    sw = sc.sweep
    if sw.over == "J":
        if sc.pool.thetas is not None:
            raise ConfigError("a sweep over J needs a pool generator (count/spacing), not thetas")
        js = [int(v) for v in sw.values]
        if sc.solver.oracle == "brute_force" and max(js) > schemes.BRUTE_FORCE_MAX_J:
            raise SizeRefusalError(
                f"brute-force oracle limited to J <= {schemes.BRUTE_FORCE_MAX_J}; "
                "use solver.oracle = continuous or none")
        jobs = [(ctx.pool(j).thetas, ctx.env, sc.solver.oracle, sc.grids.grid_step) for j in js]
        points = pmap(_sweep_j_point, jobs, ctx.workers)
        cols = ["J", "l_star", "l_ratio", "welfare_simplified", "welfare_oracle", "welfare_gap"]
        rows = [[p[c] for c in cols] for p in points]
        files = {"sweep.csv": ctx.csv(cols, rows),
                 "plot_lstar_vs_j.csv": ctx.csv(["series", "x", "y"],
                                                [["l_star", p["J"], p["l_star"]] for p in points])}
        if sc.solver.oracle != "none":
            files["plot_welfare_gap_vs_j.csv"] = ctx.csv(
                ["series", "x", "y"], [["welfare_gap", p["J"], p["welfare_gap"]] for p in points])
        ratios = [p["l_ratio"] for p in points]
        results = {"points": points, "l_ratio_band": max(ratios) / min(ratios)}
        return results, files
    if sw.over == "eta":
        pool = ctx.pool()
        ctx.describe_pool(pool)
        merged = _verify_runs(ctx, pool, [float(v) for v in sw.values])
        rows = [[e, noise, hits / sc.mc.trials, len(fails)]
                for (e, noise), (hits, fails) in merged.items()]
        files = {"sweep.csv": ctx.csv(["eta", "noise_model", "nash_fraction", "failures"], rows),
                 "plot_nash_fraction_vs_eta.csv": ctx.csv(
                     ["series", "x", "y"], [[r[1], r[0], r[2]] for r in rows])}
        return {"points": [dict(zip(("eta", "noise_model", "nash_fraction", "failures"), r))
                           for r in rows]}, files
    # over q
    rows = []
    for v in sw.values:
        cov = _coverage(ctx, int(v))
        rows.append([int(v), classif.coverage_fraction(cov), cov[0].eta])
    files = {"sweep.csv": ctx.csv(["q", "within_fraction", "eta_first_trial"], rows),
             "plot_coverage_vs_q.csv": ctx.csv(["series", "x", "y"],
                                               [["within_fraction", r[0], r[1]] for r in rows])}
    return {"points": [dict(zip(("q", "within_fraction", "eta_first_trial"), r))
                       for r in rows]}, files


EXPERIMENT_RUNNERS = {
    "scheme": run_scheme,
    "game": run_game,
    "vcg": run_vcg,
    "verify": run_verify,
    "estimate": run_estimate,
    "sweep": run_sweep,
}


def execute(scenario: Scenario, workers: int = 1) -> Files:
    """Run the scenario and return file name -> content, touching no disk."""
    ctx = Context(scenario, workers)
    results, files = EXPERIMENT_RUNNERS[scenario.experiment](ctx)
    summary = {"experiment": scenario.experiment, "scenario": scenario.resolved(),
               "derived": ctx.derived, "results": results,
               "files": sorted(files) + ["summary.json"]}
    files = dict(files)
    files["summary.json"] = dump_json(summary)
    return files


def run(scenario: Scenario, out_dir, workers: int = 1) -> dict:
    files = execute(scenario, workers)
    write_atomically(out_dir, files)
    return files
