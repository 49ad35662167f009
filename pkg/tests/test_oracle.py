import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankope.core import EstimatorSpec, Family
from rankope.estimators import weights_for
from rankope.oracle import (
    CapExceeded,
    exact_expectation,
    exact_variance,
    rearrangement_sides,
    make_tiny_env,
    policy_value,
    sample_tiny,
    theorem_3_7_rhs,
    theorem_3_8_rhs,
    theorem_C3_rhs,
    verify_theorems,
)

GIPS = {"full": Family.SIPS, "position": Family.IIPS, "prefix": Family.RIPS}
GMIPS = {"full": Family.MSIPS, "position": Family.MIIPS, "prefix": Family.MRIPS}
SCOPES = tuple(GIPS)


@pytest.mark.parametrize("scope", SCOPES)
def test_on_policy_gap_is_zero(scope):
    env = make_tiny_env(0, reward="scope", scope=scope)
    env = dataclasses.replace(env, target=env.logging)
    np.testing.assert_allclose(theorem_3_7_rhs(env, scope), 0.0, atol=1e-12)
    truth = policy_value(env).position
    np.testing.assert_allclose(exact_expectation(env, EstimatorSpec(GMIPS[scope])).position, truth, atol=1e-12)


@pytest.mark.parametrize("scope", SCOPES)
def test_injective_embeddings_remove_the_gap(scope):
    # 2 dims x 2 categories give 4 codes for 3 actions
    env = make_tiny_env(1, reward="scope", scope=scope, deterministic_embeddings=True)
    np.testing.assert_allclose(theorem_3_7_rhs(env, scope), 0.0, atol=1e-12)
    gap = exact_variance(env, EstimatorSpec(GIPS[scope])).position - exact_variance(
        env, EstimatorSpec(GMIPS[scope])
    ).position
    np.testing.assert_allclose(gap, 0.0, atol=1e-10)


def test_full_scope_bias_term_vanishes():
    env = make_tiny_env(2, reward="embedding")
    np.testing.assert_allclose(theorem_C3_rhs(env, "full"), 0.0, atol=1e-12)


@pytest.mark.parametrize("scope", SCOPES)
def test_bias_identity_ignores_ranking_order(scope):
    env = make_tiny_env(3, reward="action")
    order = np.random.default_rng(0).permutation(len(env.rankings))
    np.testing.assert_allclose(
        theorem_3_8_rhs(env, scope), theorem_3_8_rhs(env, scope, order=order), atol=1e-12
    )


def test_action_effects_bias_only_the_marginal_estimator():
    env = make_tiny_env(4, reward="action")
    truth = policy_value(env).position
    sips = exact_expectation(env, EstimatorSpec(Family.SIPS)).position - truth
    np.testing.assert_allclose(sips, 0.0, atol=1e-12)
    bias = exact_expectation(env, EstimatorSpec(Family.MIIPS)).position - truth
    assert np.abs(bias).max() > 1e-4


def test_exact_variance_matches_sampling():
    env = make_tiny_env(5, reward="scope", scope="position")
    spec = EstimatorSpec(Family.MIIPS)
    ds = sample_tiny(env, 100_000, np.random.default_rng(7))
    terms = weights_for(ds, spec) * ds.rewards
    sample_var = terms.var(axis=0, ddof=1)
    centered = terms - terms.mean(axis=0)
    se = np.sqrt(np.maximum((centered**4).mean(axis=0) - sample_var**2, 0.0) / ds.n)
    exact = exact_variance(env, spec).position
    assert np.all(np.abs(sample_var - exact) <= 3 * se)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_marginal_variance_does_not_exceed_full(seed):
    env = make_tiny_env(seed, reward="scope", scope="full")
    full = exact_variance(env, EstimatorSpec(Family.SIPS)).position
    marginal = exact_variance(env, EstimatorSpec(Family.MSIPS)).position
    assert np.all(marginal <= full + 1e-12)


def test_rearrangement_hand_case():
    lhs, rhs = rearrangement_sides([1.0, 2.0], [0.3, 0.7], [5.0, -1.0], 0.5)
    # sum g h = 0.8; lhs = 0.3*(5-0.4) + 2*0.7*(-1-0.4) = 1.38 - 1.96
    assert lhs == pytest.approx(-0.58, abs=1e-12)
    assert abs(lhs - rhs) < 1e-12


def test_rearrangement_single_element():
    lhs, rhs = rearrangement_sides([2.5], [1.0], [3.0], 0.4)
    assert lhs == pytest.approx(2.5 * 3.0 * 0.6)
    assert abs(lhs - rhs) < 1e-12


@settings(max_examples=50, deadline=None)
@given(m=st.integers(1, 8), seed=st.integers(0, 2**31 - 1))
def test_rearrangement_random(m, seed):
    rng = np.random.default_rng(seed)
    f, h = rng.normal(size=(2, m))
    g = rng.dirichlet(np.ones(m))
    lhs, rhs = rearrangement_sides(f, g, h, float(rng.normal()))
    assert abs(lhs - rhs) < 1e-9


def test_cap_exceeded():
    with pytest.raises(CapExceeded):
        make_tiny_env(0, K=3, n_actions=6, D=3, n_categories=3, cap=10_000)


@pytest.mark.parametrize("kind", ["gaussian", "bernoulli"])
def test_bernoulli_and_gaussian_moments(kind):
    env = make_tiny_env(0, reward="action", reward_kind=kind)
    if kind == "bernoulli":
        np.testing.assert_allclose(env.reward_second, env.reward_mean)
    else:
        assert np.all(env.reward_second > env.reward_mean**2)


def test_exact_moments_reject_self_normalized():
    env = make_tiny_env(0)
    with pytest.raises(ValueError):
        exact_expectation(env, EstimatorSpec(Family.SIPS, self_normalized=True))


def test_verify_theorems_all_pass():
    checks = verify_theorems(seeds=(0,), lemma_instances=100)
    assert checks
    failed = [c.as_text() for c in checks if not c.passed]
    assert not failed, failed
