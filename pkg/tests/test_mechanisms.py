import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collabsel import (
    AgentPool,
    ConfigError,
    ContributionScheme,
    InfeasibleVerificationError,
    binding_scheme,
    outside_utility,
    s0_env,
    simplified_scheme,
    solve_scheme,
    utilities,
)
from collabsel.mechanisms import (
    bias_vector,
    check_positive_transfer,
    draw_estimates,
    grand_coalition_nash_check,
    grand_coalition_payoffs_batch,
    monte_carlo_nash_probability,
    nash_trial_outcomes,
    q_floor,
    trial_rng,
    vcg_transfers,
    verification_round,
    wilson_interval,
)

ENV = s0_env()
pools = st.lists(st.integers(0, 600), min_size=2, max_size=8, unique=True).map(
    lambda ks: AgentPool(np.sort(np.array(ks)) * 1e-4))


def test_q_floor():
    assert q_floor(ENV) == pytest.approx(3.0)
    assert q_floor(ENV, 2.0) == 2.0
    with pytest.raises(ConfigError):
        q_floor(ENV, 4.0)
    with pytest.raises(InfeasibleVerificationError):
        q_floor(s0_env(theta_max=0.2))


def test_bias_vector():
    np.testing.assert_array_equal(bias_vector(1, 3, 0.5), [0.5, -0.5, 0.5])
    with pytest.raises(ConfigError):
        bias_vector(3, 3, 0.1)


def test_positive_transfer_picks_largest_payment():
    assert check_positive_transfer([0.0, 1.0]) is None
    assert check_positive_transfer([-1.0, -3.0, 2.0]) == 1


@settings(max_examples=60, deadline=None)
@given(pools)
def test_vcg_needs_a_payment(pool):
    assert check_positive_transfer(vcg_transfers(pool.thetas, pool, ENV)) is not None


@settings(max_examples=60, deadline=None)
@given(pools)
def test_vcg_pivot_term_vanishes_for_binding_contributors(pool):
    """Under binding contributions a contributor's own term u_j - o_j is zero,
    so its transfer is the others' welfare difference alone."""
    sol = binding_scheme(pool.thetas, ENV)
    u = utilities(sol.scheme, pool, ENV)
    o = outside_utility(pool.thetas, ENV)
    assert np.all(np.abs((u - o)[sol.n > 0]) <= 1e-7)
    t = vcg_transfers(pool.thetas, pool, ENV, mode="binding_fixed_point")
    for j in np.nonzero(sol.n > 0)[0]:
        others = np.arange(pool.size) != j
        n_minus = sol.n.copy()
        n_minus[j] = 0.0
        b = np.ones(pool.size, dtype=int)
        b[j] = 0
        if n_minus.sum() == 0:
            continue
        u_minus = utilities(ContributionScheme(b, n_minus), pool, ENV)
        assert t[j] == pytest.approx(u_minus[others].sum() - u[others].sum(), abs=1e-9)


def test_verification_round_bookkeeping():
    pool = AgentPool([0.0, 0.02, 0.04, 0.06])
    b = np.array([1, 1, 1, 0])
    rnd = verification_round(b, pool, ENV, pool.thetas, 0.01)
    assert rnd.payoffs[3] == pytest.approx(float(outside_utility(0.06, ENV)))
    assert rnd.requested[3] == 0 and rnd.kept[3] == 0
    members = rnd.members
    assert np.all(rnd.requested[members] >= rnd.q_floor)
    np.testing.assert_array_equal(rnd.kept > 0, rnd.asked > 0)
    for pos, j in enumerate(members):
        biased = pool.thetas[members] + bias_vector(pos, members.size, 0.01)
        assert rnd.asked[j] == solve_scheme(biased, ENV).n[pos]


def test_verification_round_rejects_bad_input():
    pool = AgentPool([0.0, 0.06])
    with pytest.raises(ConfigError):
        verification_round([1], pool, ENV, [0.0, 0.06], 0.01)
    with pytest.raises(ConfigError):
        verification_round([1, 1], pool, ENV, [0.0, 0.06], -0.1)


@settings(max_examples=40, deadline=None)
@given(pools, st.floats(0.0, 0.05), st.integers(0, 2 ** 32))
def test_batch_payoffs_equal_scalar_round(pool, eta, seed):
    rng = np.random.default_rng(seed)
    est = pool.thetas + rng.uniform(-eta, eta, (5, pool.size))
    batch = grand_coalition_payoffs_batch(pool, ENV, est, eta)
    ones = np.ones(pool.size, dtype=int)
    for row, e in zip(batch, est):
        assert np.array_equal(row, verification_round(ones, pool, ENV, e, eta).payoffs)


@settings(max_examples=20, deadline=None)
@given(pools, st.sampled_from([0.005, 0.01, 0.02]), st.integers(0, 2 ** 32))
def test_grand_coalition_nash_within_small_eta(pool, eta, seed):
    for noise in ("uniform_within_eta", "corners_within_eta"):
        frac, fails = monte_carlo_nash_probability(pool, ENV, noise, 300, seed, eta)
        assert frac == 1.0, fails[:1]


def test_binding_verification_can_fail():
    # Binding asks leave no slack, so any noise can push an agent below o_j.
    pool = AgentPool([0.0, 0.02, 0.04, 0.06])
    frac, fails = monte_carlo_nash_probability(pool, ENV, "corners_within_eta", 200, 1, 0.01,
                                               mode="binding_fixed_point")
    assert frac < 1.0
    trial, est, (agent, shortfall) = fails[0]
    assert shortfall < 0


def test_large_eta_breaks_the_guarantee():
    pool = AgentPool([0.0, 0.02, 0.04, 0.06])
    frac, _ = monte_carlo_nash_probability(pool, ENV, "uniform_within_eta", 500, 3, 0.3)
    assert frac < 1.0


def test_nash_check_witness():
    pool = AgentPool([0.0, 0.06])
    ok, witness = grand_coalition_nash_check(pool, ENV, pool.thetas, 0.0)
    assert ok and witness is None


def test_trials_are_order_independent():
    pool = AgentPool([0.0, 0.01, 0.05])
    whole = nash_trial_outcomes(pool, ENV, "uniform_within_eta", 0, 3000, 9, 0.1)
    parts = [nash_trial_outcomes(pool, ENV, "uniform_within_eta", a, b, 9, 0.1)
             for a, b in ((0, 1000), (1000, 2500), (2500, 3000))]
    assert whole[0] == sum(p[0] for p in parts)
    assert [f[0] for f in whole[1]] == [f[0] for p in parts for f in p[1]]
    scalar = nash_trial_outcomes(pool, ENV, "uniform_within_eta", 0, 300, 9, 0.1,
                                 mode="closed_form")
    assert scalar[0] == sum(
        grand_coalition_nash_check(pool, ENV, draw_estimates(pool.thetas, 0.1,
                                   "uniform_within_eta", trial_rng(9, t)), 0.1)[0]
        for t in range(300))


def test_noise_models():
    rng = np.random.default_rng(0)
    t = np.zeros(1000)
    u = draw_estimates(t, 0.1, "uniform_within_eta", rng)
    c = draw_estimates(t, 0.1, "corners_within_eta", rng)
    assert np.all(np.abs(u) <= 0.1)
    assert set(np.round(c, 12)) == {-0.1, 0.1}
    with pytest.raises(ConfigError):
        draw_estimates(t, 0.1, "gauss", rng)
    with pytest.raises(ConfigError):
        monte_carlo_nash_probability(AgentPool([0.0]), ENV, "gauss", 10, 0, 0.1)


@settings(max_examples=100, deadline=None)
@given(pools, st.floats(0.0, 0.05), st.data())
def test_own_downward_bias_never_raises_own_ask(pool, eta, data):
    """With the contributor set unchanged, the biased ask of agent j is at most
    the unbiased one (it drops by 2(2a/c) eta (L-1)/L)."""
    j = data.draw(st.integers(0, pool.size - 1))
    est = pool.thetas
    biased = solve_scheme(est + bias_vector(j, pool.size, eta), ENV).n
    plain = solve_scheme(est, ENV).n
    if np.array_equal(biased > 0, plain > 0):
        assert biased[j] <= plain[j] + 1e-12


def test_raising_own_estimate_raises_own_ask():
    # Worse declared data means a larger ask within the contributor set.
    ts = np.array([0.0, 0.02, 0.04, 0.06])
    base = simplified_scheme(ts, ENV).n[1]
    bumped = simplified_scheme(ts + np.array([0, 0.001, 0, 0]), ENV).n[1]
    assert bumped > base


def test_wilson_interval():
    lo, hi = wilson_interval(100, 100)
    assert hi == 1.0 and 0.96 < lo < 0.97
    assert wilson_interval(0, 0) == (0.0, 1.0)
