import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collabsel import AgentPool, ConfigError, SizeRefusalError, outside_utility, s0_env
from collabsel.game import (
    RevelationGame,
    best_response,
    best_response_dynamics,
    certify_nash,
    coalition_shape,
    declared_type_grid,
    encode_profile,
    enumerate_pure_nash,
    naive_payoff,
    truthful_profile,
)

ENV = s0_env()
GRID5 = declared_type_grid(ENV, 5)
generic_pools = st.lists(st.integers(0, 60), min_size=2, max_size=3, unique=True).map(
    lambda ks: AgentPool(np.sort(np.array(ks)) * 1e-3))


def test_grid_and_encoding():
    assert GRID5 == (0.0, 0.015, 0.03, 0.045, 0.06)
    assert declared_type_grid(ENV, 1) == (0.0,)
    assert coalition_shape((None, None)) == "empty"
    assert coalition_shape((None, 0.0)) == "worst_only"
    assert coalition_shape((0.0, None)) == "other"
    assert encode_profile((None, 0.015)) == "out in(0.015)"
    with pytest.raises(ConfigError):
        RevelationGame(AgentPool([0.0]), ENV, (0.5,))


def test_lone_member_gets_outside_utility_for_any_declaration():
    pool = AgentPool([0.0, 0.03, 0.06])
    for j in range(3):
        for decl in GRID5:
            prof = tuple(decl if k == j else None for k in range(3))
            assert naive_payoff(j, prof, pool, ENV) == pytest.approx(
                float(outside_utility(pool.thetas[j], ENV)), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(generic_pools, st.data())
def test_payoff_identity_under_binding_mode(pool, data):
    """v_j = o(theta_j) + 2a[(theta_j - decl_j) - (vartheta - vartheta_declared)]."""
    game = RevelationGame(pool, ENV, GRID5)
    prof = tuple(data.draw(st.sampled_from(GRID5)) for _ in range(pool.size))
    n = game.contributions(prof)
    decl = np.array(prof)
    vt, vt_decl = n @ pool.thetas / n.sum(), n @ decl / n.sum()
    v = game.payoffs(prof)
    for j in np.nonzero(n > 0)[0]:
        expect = (outside_utility(pool.thetas[j], ENV)
                  + 2 * ENV.a * ((pool.thetas[j] - decl[j]) - (vt - vt_decl)))
        assert v[j] == pytest.approx(float(expect), abs=1e-7)


@settings(max_examples=15, deadline=None)
@given(generic_pools)
def test_lower_declaration_never_hurts_a_contributor(pool):
    """Payoff is non-increasing in own declaration while the agent keeps contributing."""
    game = RevelationGame(pool, ENV, declared_type_grid(ENV, 7))
    for prof in itertools.product(game.actions, repeat=pool.size):
        for j, own in enumerate(prof):
            if own is None:
                continue
            for lo, hi in zip(game.grid, game.grid[1:]):
                p_lo = prof[:j] + (lo,) + prof[j + 1:]
                p_hi = prof[:j] + (hi,) + prof[j + 1:]
                if game.contributions(p_lo)[j] > 0 and game.contributions(p_hi)[j] > 0:
                    assert game.payoff(j, p_hi) <= game.payoff(j, p_lo) + 1e-9


@settings(max_examples=15, deadline=None)
@given(generic_pools)
def test_unravelling_small_instances(pool):
    reports = enumerate_pure_nash(GRID5, pool, ENV)
    assert reports
    assert {r.coalition_shape for r in reports} <= {"empty", "worst_only"}
    assert any(r.profile == (None,) * pool.size for r in reports)


def test_certification_is_reproducible():
    pool = AgentPool([0.0, 0.03, 0.06])
    prof = (0.0, 0.015, None)
    a = certify_nash(prof, GRID5, pool, ENV)
    b = certify_nash(prof, GRID5, pool, ENV)
    assert (a.is_nash, a.witness, a.max_gain) == (b.is_nash, b.witness, b.max_gain)
    assert np.array_equal(a.payoffs, b.payoffs)
    assert best_response(1, prof, GRID5, pool, ENV) == best_response(1, prof, GRID5, pool, ENV)


def test_truthful_grand_coalition_is_not_nash():
    pool = AgentPool([0.0, 0.03, 0.06])
    report = certify_nash(truthful_profile(pool, GRID5), GRID5, pool, ENV)
    assert not report.is_nash
    j, action, gain = report.witness
    assert gain > 0


def test_dynamics_two_agents_unravel():
    pool = AgentPool([0.0, 0.06])
    final, converged, trace = best_response_dynamics(truthful_profile(pool, GRID5), GRID5,
                                                     pool, ENV)
    assert converged
    assert coalition_shape(final) in ("empty", "worst_only")
    assert certify_nash(final, GRID5, pool, ENV).is_nash
    assert trace[0] == (0, -1, None, 2)


def test_dynamics_stop_on_a_cycle():
    pool = AgentPool([0.0, 0.03, 0.06])
    final, converged, trace = best_response_dynamics(truthful_profile(pool, GRID5), GRID5,
                                                     pool, ENV, max_rounds=100)
    assert not converged
    assert trace[-1][0] < 100


def test_enumeration_limits():
    with pytest.raises(SizeRefusalError):
        enumerate_pure_nash(GRID5, AgentPool(np.linspace(0, 0.06, 5)), ENV)
    with pytest.raises(SizeRefusalError):
        enumerate_pure_nash(declared_type_grid(ENV, 10), AgentPool([0.0, 0.06]), ENV)
    with pytest.raises(ConfigError):
        RevelationGame(AgentPool([0.0, 0.06]), ENV, GRID5).payoffs((None,))


def test_closed_form_mode_is_available():
    pool = AgentPool([0.0, 0.03, 0.06])
    game = RevelationGame(pool, ENV, GRID5, mode="closed_form")
    v = game.payoffs((0.0, 0.03, 0.06))
    assert v.shape == (3,)
    assert not np.allclose(v, RevelationGame(pool, ENV, GRID5).payoffs((0.0, 0.03, 0.06)))
