import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from collabsel import ConfigError, classif_env, s0_env
from collabsel.classif import (
    LabeledSamples,
    SyntheticAgentDist,
    ThresholdClassifier,
    coverage_experiment,
    coverage_fraction,
    empirical_risk,
    erm_fit,
    error_count,
    eta_bound,
    h_divergence_label_flip,
    h_divergence_sup_scan,
    pac_alpha,
    rademacher_exact,
    sample,
    true_type,
)

UNIT = classif_env("classif_unitrate", delta=0.05)

# Features on a coarse lattice so duplicates are common.
xs = st.integers(0, 20).map(lambda k: k / 20)
sample_sets = st.lists(st.tuples(xs, st.sampled_from([-1, 1])), min_size=1, max_size=30).map(
    lambda pts: LabeledSamples([p[0] for p in pts], [p[1] for p in pts]))


def test_sign_convention():
    g = ThresholdClassifier(0.5)
    np.testing.assert_array_equal(g.predict([0.49, 0.5, 0.51]), [-1, 1, 1])
    np.testing.assert_array_equal(g.negated().predict([0.5]), [-1])
    with pytest.raises(ConfigError):
        ThresholdClassifier(0.5, 0)


def test_sample_validation():
    with pytest.raises(ConfigError):
        LabeledSamples([0.5], [0])
    with pytest.raises(ConfigError):
        LabeledSamples([1.5], [1])
    with pytest.raises(ConfigError):
        SyntheticAgentDist(0.5, 0.5)
    with pytest.raises(ConfigError):
        erm_fit(LabeledSamples([], []))


@settings(max_examples=200, deadline=None)
@given(sample_sets, st.floats(-0.1, 1.1), st.sampled_from([-1, 1]))
def test_symmetry_identity(samples, s, sigma):
    g = ThresholdClassifier(s, sigma)
    n = len(samples)
    assert error_count(g.negated(), samples) == n - error_count(g, samples)
    # Risks are those counts over n: equal up to the rounding of 1 - r.
    assert empirical_risk(g.negated(), samples) == pytest.approx(
        1 - empirical_risk(g, samples), rel=0, abs=2 ** -52)


@settings(max_examples=200, deadline=None)
@given(sample_sets)
def test_erm_matches_naive_scan(samples):
    g, risk = erm_fit(samples)
    assert risk == oracles.erm_naive(samples.x, samples.y)
    assert empirical_risk(g, samples) == risk


@settings(max_examples=300, deadline=None)
@given(sample_sets, sample_sets)
def test_estimators_agree(sj, s0):
    a = h_divergence_label_flip(sj, s0)
    assert a == h_divergence_sup_scan(sj, s0)
    assert a == pytest.approx(oracles.sup_scan_naive(sj.x, sj.y, s0.x, s0.y), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 5).map(lambda k: k / 5), min_size=1, max_size=9))
def test_rademacher_matches_double_loop(points):
    assert rademacher_exact(points) == oracles.rademacher_naive(points)


@pytest.mark.parametrize("n", [10, 12])
def test_rademacher_distinct_points_up_to_twelve(n):
    pts = np.linspace(0.05, 0.95, n)
    assert rademacher_exact(pts) == oracles.rademacher_naive(pts)


def test_rademacher_frozen_values():
    # Derived by exhaustive enumeration.
    assert rademacher_exact([0.3]) == 1.0
    assert rademacher_exact([0.2, 0.7]) == 1.0
    assert rademacher_exact([0.4, 0.4, 0.4]) == 0.5
    big = rademacher_exact(np.linspace(0, 1, 200), draws=20_000, seed=1)
    assert big == rademacher_exact(np.linspace(0, 1, 200), draws=20_000, seed=1)
    assert 0 < big < 0.25


def test_true_type_against_population_grid():
    for t_star in (0.2, 0.5, 0.8):
        for p in (0.0, 0.03, 0.1, 0.3):
            d = SyntheticAgentDist(t_star, p)
            assert abs(true_type(d) - oracles.population_type_grid(t_star, p)) <= 1e-4


def test_type_recovery_with_many_samples():
    s0 = sample(SyntheticAgentDist(0.5, 0.0), 10_000, 3, (0,))
    errors = []
    for j, p in enumerate((0.0, 0.02, 0.04, 0.06)):
        sj = sample(SyntheticAgentDist(0.5, p), 10_000, 3, (j + 1,))
        errors.append(abs(h_divergence_label_flip(sj, s0) - p))
    assert np.median(errors) < 0.02


def test_sampling_is_indexed():
    d = SyntheticAgentDist(0.5, 0.1)
    a, b = sample(d, 50, 1, (2, 3)), sample(d, 50, 1, (2, 3))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.x, sample(d, 50, 1, (2, 4)).x)


def test_eta_bound_values():
    alpha = math.sqrt(math.log(4 * 4 / 0.05))
    assert pac_alpha(UNIT, 0.05 / 16) == pytest.approx(alpha)
    assert eta_bound(9, 99, UNIT, 4) == pytest.approx(alpha * (0.1 + 0.01), rel=1e-12)
    assert eta_bound(9, 99, UNIT, 4) == pytest.approx(0.26419, abs=1e-5)
    with_rad = classif_env("classif_unitrate", rad=0.05)
    assert eta_bound(9, 99, with_rad, 4) == pytest.approx(eta_bound(9, 99, UNIT, 4) + 0.1)
    # Non-classification envs keep their alpha and add twice beta.
    env = s0_env(beta=0.01)
    assert eta_bound(9, 99, env) == pytest.approx(1.0 * 0.11 + 0.02)
    with pytest.raises(ConfigError):
        eta_bound(-1, 5, UNIT)


def test_coverage_is_chunkable_and_high():
    dists = [SyntheticAgentDist(0.5, p) for p in (0.0, 0.04)]
    whole = coverage_experiment(dists, 30, 60, UNIT, trials=40, seed=4)
    parts = (coverage_experiment(dists, 30, 60, UNIT, trials=15, seed=4)
             + coverage_experiment(dists, 30, 60, UNIT, trials=25, seed=4, start=15))
    assert [r.as_row() for r in whole] == [r.as_row() for r in parts]
    assert coverage_fraction(whole) >= 0.95
    fixed = coverage_experiment(dists, 30, 60, UNIT, trials=5, seed=4, eta=0.0)
    assert {r.eta for r in fixed} == {0.0}
    with pytest.raises(ConfigError):
        coverage_fraction([])
