import itertools

import numpy as np
import pytest
from scipy.special import expit

from rankope.config import ExperimentConfig
from rankope.core import BehaviorMatrix, EmbeddingModel
from rankope.policy import FactorizedRankingPolicy
from rankope.synthenv import (
    BehaviorDistribution,
    RewardModel,
    base_reward,
    base_reward_action,
    base_reward_actions,
    behavior_distribution,
    enumerate_embeddings,
    expected_reward_embedding,
    expected_reward_matrix,
    gen_contexts,
    gen_embedding_model,
    generate_log,
    make_behavior_matrix,
    make_environment,
    replication_rng,
    true_policy_value,
)


def hand_model(D=1, E=2, dx=1, K=3, G=1.0, seed=None):
    if seed is None:
        return RewardModel(
            eta=np.ones(D),
            M=np.zeros((dx, dx)),
            theta_x=np.zeros(dx),
            theta_e=np.zeros(dx),
            latent_e=np.zeros((D, E, dx)),
            G=np.full((K, K), G),
        )
    rng = np.random.default_rng(seed)
    return RewardModel(
        eta=rng.uniform(size=D),
        M=rng.normal(size=(dx, dx)),
        theta_x=rng.normal(size=dx),
        theta_e=rng.normal(size=dx),
        latent_e=rng.normal(size=(D, E, dx)),
        G=rng.uniform(0, 3, size=(K, K)),
    )


# ----------------------------------------------------------------------------- contexts, embeddings


def test_contexts():
    rng = np.random.default_rng(0)
    assert gen_contexts(0, 5, rng).shape == (0, 5)
    X = gen_contexts(100_000, 5, rng)
    assert np.all(np.abs(X.mean(axis=0)) < 4 / np.sqrt(len(X)))
    assert np.all(np.abs(X.std(axis=0) - 1) < 0.02)


def test_embedding_model_generation():
    rng = np.random.default_rng(1)
    emb = gen_embedding_model([20] * 5, 3, 2, rng)
    assert emb.probs.shape == (5, 20, 3, 2)
    np.testing.assert_allclose(emb.probs.sum(axis=3), 1.0, atol=1e-12)
    single = gen_embedding_model([4, 4], 2, 1, rng)
    np.testing.assert_array_equal(single.probs, 1.0)


# ----------------------------------------------------------------------------- base rewards


def test_base_reward_zero_parameters():
    model = hand_model(D=3)
    model = RewardModel(np.array([0.2, 0.3, 0.5]), model.M, model.theta_x, model.theta_e, model.latent_e, model.G)
    assert base_reward(np.zeros(1), [0, 1, 0], model) == pytest.approx(0.5)


def test_base_reward_hand_value():
    model = RewardModel(
        eta=np.array([2.0]),
        M=np.array([[0.5]]),
        theta_x=np.array([-1.0]),
        theta_e=np.array([3.0]),
        latent_e=np.array([[[0.2], [-0.4]]]),
        G=np.zeros((1, 1)),
    )
    x = np.array([1.5])
    for cat, xe in ((0, 0.2), (1, -0.4)):
        expected = 2.0 * expit(1.5 * 0.5 * xe - 1.5 + 3.0 * xe)
        assert base_reward(x, [cat], model) == pytest.approx(expected, rel=1e-14)


def test_base_reward_category_permutation_symmetry():
    model = hand_model(D=2, E=3, dx=2, seed=3)
    latent = model.latent_e.copy()
    latent[1, 2] = latent[1, 0]
    model = RewardModel(model.eta, model.M, model.theta_x, model.theta_e, latent, model.G)
    x = np.array([0.3, -1.2])
    assert base_reward(x, [1, 0], model) == pytest.approx(base_reward(x, [1, 2], model))


def test_action_reward_deterministic_embedding():
    model = hand_model(D=3, dx=2, seed=4)
    probs = np.zeros((3, 2, 3, 2))
    probs[:, 0, :, 0] = 1.0
    probs[:, 1, [0, 1, 2], [1, 0, 1]] = 1.0
    emb = EmbeddingModel(probs)
    x = np.array([0.7, 0.1])
    assert base_reward_action(x, 0, 1, model, emb) == pytest.approx(base_reward(x, [1, 0, 1], model))


def test_action_reward_half_half_averages():
    model = hand_model(D=1, dx=2, seed=5)
    emb = EmbeddingModel(np.full((1, 1, 1, 2), 0.5))
    x = np.array([0.2, 0.4])
    avg = 0.5 * (base_reward(x, [0], model) + base_reward(x, [1], model))
    assert base_reward_action(x, 0, 0, model, emb) == pytest.approx(avg)


def test_action_reward_brute_force():
    model = hand_model(D=3, dx=2, seed=6)
    emb = EmbeddingModel.from_logits(np.random.default_rng(7).normal(size=(2, 4, 3, 2)))
    x = np.array([-0.5, 1.0])
    table = base_reward_actions(x[None], model, emb)[0]
    for k, a in itertools.product(range(2), range(4)):
        total = 0.0
        for e in itertools.product(range(2), repeat=3):
            p = np.prod([emb.probs[k, a, d, e[d]] for d in range(3)])
            total += p * base_reward(x, e, model)
        assert table[k, a] == pytest.approx(total, rel=1e-12)


# ----------------------------------------------------------------------------- behaviors and interactions


def test_behavior_catalogue():
    np.testing.assert_array_equal(make_behavior_matrix("cascade", 3).c, np.tril(np.ones((3, 3))))
    for K in (1, 4, 7):
        np.testing.assert_array_equal(make_behavior_matrix("independent", K).c, np.eye(K))
    np.testing.assert_array_equal(make_behavior_matrix("neighbor_1", 4).c[1], [1, 1, 1, 0])
    np.testing.assert_array_equal(make_behavior_matrix("inverse_cascade", 3).c, np.triu(np.ones((3, 3))))
    top2 = make_behavior_matrix("top_2_cascade", 4).c
    np.testing.assert_array_equal(top2[3], [1, 1, 0, 1])
    rnd = make_behavior_matrix("random_0", 5)
    assert np.all(np.diag(rnd.c) == 1)
    assert rnd == make_behavior_matrix("random_0", 5)
    with pytest.raises(ValueError):
        make_behavior_matrix("sideways", 3)


def test_independent_rewards_are_base_values():
    model = hand_model(D=2, dx=2, K=3, seed=8)
    e = np.array([[0, 1], [1, 1], [1, 0]])
    x = np.array([0.1, -0.3])
    q = expected_reward_embedding(x, e, "independent", model)
    np.testing.assert_allclose(q, [base_reward(x, e[k], model) for k in range(3)])


def test_single_position_kinds_coincide():
    model = hand_model(D=2, dx=2, K=1, seed=9)
    e = np.array([[1, 0]])
    x = np.array([0.5, 0.5])
    outs = [expected_reward_embedding(x, e, kind, model) for kind in ("independent", "cascade", "standard")]
    np.testing.assert_allclose(outs[0], outs[1])
    np.testing.assert_allclose(outs[0], outs[2])


def test_cascade_hand_example():
    # Base values 1, 2, 3 at the three positions; unit interaction magnitudes.
    latent = np.zeros((1, 3, 1))
    model = RewardModel(np.ones(1), np.zeros((1, 1)), np.zeros(1), np.zeros(1), latent, np.ones((3, 3)))
    C = np.array([[1.0, 0, 0], [1.0, 1.0, 0], [0.5, 1.0, 1.0]])
    from rankope.synthenv import interaction_coefficients

    np.testing.assert_allclose(interaction_coefficients(make_behavior_matrix("cascade", 3), model.G), C)
    q = C @ np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(q, [1.0, 3.0, 5.5])


def test_action_level_rewards():
    model = hand_model(D=2, dx=2, K=2, seed=10)
    emb = EmbeddingModel.from_logits(np.random.default_rng(11).normal(size=(2, 3, 2, 2)))
    x = np.array([0.4, -0.9])
    a = np.array([2, 1])
    qbar = [base_reward_action(x, k, a[k], model, emb) for k in range(2)]
    q = expected_reward_matrix(x, a, make_behavior_matrix("independent", 2), model, emb)
    np.testing.assert_allclose(q, qbar)
    q = expected_reward_matrix(x, a, make_behavior_matrix("cascade", 2), model, emb)
    np.testing.assert_allclose(q, [qbar[0], qbar[1] + model.G[1, 0] * qbar[0]])
    q = expected_reward_matrix(x, a, make_behavior_matrix("standard", 2), model, emb)
    np.testing.assert_allclose(q, [qbar[0] + model.G[0, 1] * qbar[1], qbar[1] + model.G[1, 0] * qbar[0]])


def test_behavior_distribution():
    bm = make_behavior_matrix("cascade", 3)
    one = BehaviorDistribution((bm,), np.ones((1, 2)), np.ones(1))
    np.testing.assert_allclose(behavior_distribution(np.array([0.3, 0.2]), one), [1.0])
    two = (bm, make_behavior_matrix("independent", 3))
    flat = BehaviorDistribution(two, np.ones((2, 1)), np.zeros(2))
    np.testing.assert_allclose(behavior_distribution(np.array([2.0]), flat), [0.5, 0.5])
    hand = BehaviorDistribution(two, np.array([[0.5], [-1.0]]), np.array([1.0, 2.0]))
    # logits |0.5 * 2| * 1 = 1 and |-1 * 2| * 2 = 4
    p = behavior_distribution(np.array([2.0]), hand)
    np.testing.assert_allclose(p, np.exp([1.0, 4.0]) / np.exp([1.0, 4.0]).sum())


# ----------------------------------------------------------------------------- generation


def test_generate_log_defaults_and_determinism():
    cfg = ExperimentConfig(n=1)
    a = generate_log(cfg, replication_rng(3, 0))
    b = generate_log(cfg, replication_rng(3, 0))
    assert a == b and a.n == 1 and a.n_positions == 5 and a.n_dims == 3
    assert a.config_fingerprint == cfg.fingerprint()


def test_generated_action_frequencies_match_logging():
    cfg = ExperimentConfig(n=100_000, n_contexts=1, n_actions=4, n_positions=2)
    ds = generate_log(cfg, replication_rng(0, 0))
    p = ds.logging_policy.probs[0]
    for k in range(2):
        freq = np.bincount(ds.actions[:, k], minlength=4) / ds.n
        assert np.all(np.abs(freq - p[k]) <= 3 * np.sqrt(p[k] * (1 - p[k]) / ds.n) + 1e-12)


def test_deficient_actions_never_logged():
    cfg = ExperimentConfig(n=5000, n_actions=10, n_deficient=4, n_positions=3)
    env = make_environment(cfg)
    ds = generate_log(cfg, replication_rng(0, 0))
    assert env.logging_support.sum(axis=1).tolist() == [6, 6, 6]
    assert np.all(env.logging_support[np.arange(3)[None, :], ds.actions])


def test_environment_blocks_are_independent():
    a = make_environment(ExperimentConfig(n_deficient=0))
    b = make_environment(ExperimentConfig(n_deficient=5))
    np.testing.assert_array_equal(a.reward_model.M, b.reward_model.M)
    assert a.embedding_model == b.embedding_model


def test_bernoulli_rewards_are_binary():
    ds = generate_log(ExperimentConfig(n=200, reward_kind="bernoulli"), replication_rng(0, 1))
    assert set(np.unique(ds.rewards)) <= {0.0, 1.0}


def test_logged_behaviors_follow_catalogue():
    cfg = ExperimentConfig(n=500, catalogue=("independent", "cascade", "standard"))
    ds = generate_log(cfg, replication_rng(0, 2))
    assert [b.name for b in ds.behaviors] == ["independent", "cascade", "standard"]
    assert set(np.unique(ds.behavior_ids)) <= {0, 1, 2}


# ----------------------------------------------------------------------------- policy value


def test_exact_matches_montecarlo():
    cfg = ExperimentConfig(n_positions=2, n_actions=3, n_dims=1, n_contexts=4, seed=5)
    exact = true_policy_value(cfg, mode="exact")
    mc = true_policy_value(cfg, budget=200_000)
    assert abs(exact.value - mc.value) <= 4 * mc.se + 1e-12


@pytest.mark.parametrize("kind", ["gaussian", "bernoulli"])
def test_exact_matches_montecarlo_with_behavior_mixture(kind):
    cfg = ExperimentConfig(
        n_positions=2, n_actions=3, n_dims=2, n_contexts=3, seed=2, reward_kind=kind,
        catalogue=("independent", "cascade", "standard"),
    )
    exact = true_policy_value(cfg, mode="exact")
    mc = true_policy_value(cfg, budget=200_000)
    assert abs(exact.value - mc.value) <= 4 * max(mc.se, 1e-9)


def test_exact_deterministic_hand_value():
    cfg = ExperimentConfig(n_positions=2, n_actions=2, n_dims=1, n_contexts=2, behavior="independent", seed=1)
    env = make_environment(cfg)
    probs = np.zeros((2, 2, 2))
    probs[:, 0, 1] = probs[:, 1, 0] = 1.0
    target = FactorizedRankingPolicy(probs)
    X = env.context_pool
    table = env.base_actions(X)
    hand = np.mean([table[i, 0, 1] + table[i, 1, 0] for i in range(2)])
    assert true_policy_value(cfg, target, mode="exact").value == pytest.approx(hand, rel=1e-12)


def test_exact_refuses_large_spaces():
    with pytest.raises(ValueError, match="cap"):
        true_policy_value(ExperimentConfig(n_contexts=2), mode="exact")
    with pytest.raises(ValueError, match="finite context pool"):
        true_policy_value(ExperimentConfig(n_positions=2, n_actions=2, n_dims=1), mode="exact")


def test_on_policy_value_matches_logged_mean():
    cfg = ExperimentConfig(n=100_000, behavior="independent", n_positions=3, n_actions=5, seed=4)
    env = make_environment(cfg)
    pv = true_policy_value(cfg, target_policy=lambda X: env.policies(X)[0], budget=200_000)
    ds = generate_log(cfg, replication_rng(0, 0))
    sums = ds.rewards.sum(axis=1)
    assert abs(sums.mean() - pv.value) <= 4 * np.sqrt(sums.var() / ds.n + pv.se**2)


def test_enumerate_embeddings_shape():
    out = enumerate_embeddings(2, [2, 3])
    assert out.shape == (36, 2, 2)
    assert len({tuple(r.ravel()) for r in out}) == 36


def test_behavior_matrix_type_checks():
    with pytest.raises(ValueError):
        BehaviorMatrix(np.full((2, 2), 2))
