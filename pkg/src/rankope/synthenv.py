"""Synthetic ranking environment with categorical action embeddings.

Every environment is built from an :class:`~rankope.config.ExperimentConfig`.
Its parameters (reward model, embedding model, deficient actions, behavior
distribution, finite context pool) depend only on ``cfg.seed`` and are frozen
for the experiment. Logged data is drawn from a caller-supplied generator.

Random streams are separated by ``SeedSequence`` spawn keys:

* ``(0, j)`` under ``cfg.seed``: environment parameters (``j`` names the block)
* ``(1, i)`` under the sweep root seed: replication ``i``
* ``(2,)`` under ``cfg.seed``: Monte Carlo policy value
"""
from __future__ import annotations

import functools
import itertools
import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .config import ExperimentConfig
from .core import BehaviorMatrix, EmbeddingModel, LoggedDataset
from .policy import (
    FactorizedRankingPolicy,
    make_epsilon_greedy_policy,
    make_softmax_policy,
    sample_categorical,
    sample_rankings,
)

PARAM_STREAM = 0
REPLICATION_STREAM = 1
VALUE_STREAM = 2

_FIXED_BEHAVIORS = ("standard", "cascade", "independent", "top_2_cascade", "neighbor_1", "inverse_cascade")
_RANDOM_BEHAVIOR = re.compile(r"^random_(\d+)$")


# --------------------------------------------------------------------------- behaviors


def is_behavior_name(name: str) -> bool:
    return name in _FIXED_BEHAVIORS or _RANDOM_BEHAVIOR.match(name) is not None


def make_behavior_matrix(name: str, K: int, rng_seed: Optional[int] = None) -> BehaviorMatrix:
    """Behavior matrix ``c`` with ``c[k, l] = 1`` when position ``l`` affects the reward at ``k``.

    Indices are 0-based here; ``top_2_cascade`` means the first two positions
    plus the diagonal. ``random_<s>`` draws Bernoulli(0.5) entries from seed
    ``s`` (or ``rng_seed`` if given) and forces the diagonal to one.
    """
    k = np.arange(K)[:, None]
    l = np.arange(K)[None, :]
    if name == "standard":
        c = np.ones((K, K))
    elif name == "cascade":
        c = l <= k
    elif name == "independent":
        c = l == k
    elif name == "top_2_cascade":
        c = (l <= 1) | (l == k)
    elif name == "neighbor_1":
        c = np.abs(k - l) <= 1
    elif name == "inverse_cascade":
        c = l >= k
    else:
        match = _RANDOM_BEHAVIOR.match(name)
        if match is None:
            raise ValueError(f"unknown behavior {name!r}")
        seed = int(match.group(1)) if rng_seed is None else rng_seed
        c = np.random.default_rng(seed).binomial(1, 0.5, size=(K, K))
        np.fill_diagonal(c, 1)
    return BehaviorMatrix(np.asarray(c, dtype=np.int8), name)


@dataclass(frozen=True, eq=False)
class BehaviorDistribution:
    """Context-dependent distribution over a behavior catalogue.

    ``p(c_z | x)`` is proportional to ``exp(lambda_z * |theta_z . x|)``.
    """

    catalogue: Tuple[BehaviorMatrix, ...]
    thetas: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self) -> None:
        if len(self.catalogue) == 0:
            raise ValueError("behavior catalogue must be non-empty")
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=np.float64))
        lambdas = np.asarray(self.lambdas, dtype=np.float64).reshape(-1)
        if thetas.shape[0] != len(self.catalogue) or lambdas.shape != (len(self.catalogue),):
            raise ValueError("need one theta row and one lambda per catalogue entry")
        object.__setattr__(self, "catalogue", tuple(self.catalogue))
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "lambdas", lambdas)


def behavior_distribution(x: np.ndarray, bd: BehaviorDistribution) -> np.ndarray:
    """Probabilities over ``bd.catalogue`` for one context."""
    return behavior_probs(np.asarray(x, dtype=np.float64)[None, :], bd)[0]


def behavior_probs(X: np.ndarray, bd: BehaviorDistribution) -> np.ndarray:
    """Vectorized :func:`behavior_distribution`; returns (n, Z)."""
    logits = bd.lambdas[None, :] * np.abs(X @ bd.thetas.T)
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------- reward model


@dataclass(frozen=True, eq=False)
class RewardModel:
    """Parameters of the base reward and its position interactions.

    Attributes
    ----------
    eta: ndarray, shape (D,)
        Dimension weights.
    M: ndarray, shape (dim_x, dim_x)
    theta_x, theta_e: ndarray, shape (dim_x,)
    latent_e: ndarray, shape (D, max_categories, dim_x)
        Latent vector ``x_{e_d}`` of each (dimension, category).
    G: ndarray, shape (K, K)
        Interaction magnitudes; the diagonal is unused.
    sigma_r: float
        Gaussian reward noise.
    category_counts: ndarray, shape (D,)
    kind: str
        ``gaussian`` or ``bernoulli``.
    space: str
        ``embedding``: base values are ``qbar(x, e(l))``.
        ``action``: base values are ``qbar(x, a(l))``.
    behavior: BehaviorMatrix, optional
        Fixed behavior for every sample.
    behavior_dist: BehaviorDistribution, optional
        Per-sample behavior drawn from ``p(c|x)``; overrides ``behavior``.
    """

    eta: np.ndarray
    M: np.ndarray
    theta_x: np.ndarray
    theta_e: np.ndarray
    latent_e: np.ndarray
    G: np.ndarray
    sigma_r: float = 0.5
    category_counts: Optional[np.ndarray] = None
    kind: str = "gaussian"
    space: str = "embedding"
    behavior: Optional[BehaviorMatrix] = None
    behavior_dist: Optional[BehaviorDistribution] = None

    def __post_init__(self) -> None:
        if self.sigma_r < 0:
            raise ValueError("sigma_r must be >= 0")
        if self.category_counts is None:
            counts = np.full(self.latent_e.shape[0], self.latent_e.shape[1], dtype=np.int64)
            object.__setattr__(self, "category_counts", counts)
        if self.behavior is None and self.behavior_dist is None:
            object.__setattr__(self, "behavior", make_behavior_matrix("standard", self.G.shape[0]))

    @property
    def catalogue(self) -> Tuple[BehaviorMatrix, ...]:
        if self.behavior_dist is not None:
            return self.behavior_dist.catalogue
        return (self.behavior,)

    def behavior_probs(self, X: np.ndarray) -> np.ndarray:
        if self.behavior_dist is None:
            return np.ones((X.shape[0], 1))
        return behavior_probs(X, self.behavior_dist)


def gen_contexts(n: int, dim_x: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. standard-normal contexts, shape (n, dim_x)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return rng.standard_normal((n, dim_x))


def gen_embedding_model(
    action_counts: Sequence[int],
    D: int,
    category_counts: Union[int, Sequence[int]],
    rng: np.random.Generator,
) -> EmbeddingModel:
    """Standard-normal logits ``alpha`` and per-(action, dimension) softmax over categories.

    The same table serves every position, so ``p(e|a)`` depends neither on
    ``x`` nor on ``k``; positions with fewer actions use the leading rows.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    counts = np.broadcast_to(np.asarray(category_counts, dtype=np.int64), (D,))
    K, width = len(action_counts), int(max(action_counts))
    alpha = rng.standard_normal((width, D, int(counts.max())))
    alpha = np.broadcast_to(alpha, (K,) + alpha.shape)
    return EmbeddingModel.from_logits(alpha, counts)


def dimension_terms(X: np.ndarray, model: RewardModel) -> np.ndarray:
    """``eta_d * sigmoid(x'M x_v + theta_x'x + theta_e'x_v)`` for each (context, d, v).

    Returns shape (n, D, max_categories); padded categories hold zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    latent = model.latent_e
    logits = np.einsum("nj,dvj->ndv", X @ model.M, latent)
    logits += (X @ model.theta_x)[:, None, None]
    logits += (latent @ model.theta_e)[None, :, :]
    terms = model.eta[None, :, None] * expit(logits)
    valid = np.arange(latent.shape[1])[None, :] < model.category_counts[:, None]
    return np.where(valid[None], terms, 0.0)


def base_reward(x: np.ndarray, e_row: Sequence[int], model: RewardModel) -> float:
    """``qbar(x, e) = sum_d eta_d sigmoid(x'M x_{e_d} + theta_x'x + theta_e'x_{e_d})``."""
    terms = dimension_terms(np.asarray(x)[None, :], model)[0]
    e_row = np.asarray(e_row, dtype=np.int64)
    return float(terms[np.arange(len(e_row)), e_row].sum())


def base_reward_embeddings(X: np.ndarray, embeddings: np.ndarray, model: RewardModel) -> np.ndarray:
    """``qbar(x_i, e_i(k))`` for contexts (n, dim_x) and embeddings (n, K, D); returns (n, K)."""
    terms = dimension_terms(X, model)
    D = terms.shape[1]
    picked = terms[np.arange(len(X))[:, None, None], np.arange(D)[None, None, :], embeddings]
    return picked.sum(axis=2)


def base_reward_actions(X: np.ndarray, model: RewardModel, emb: EmbeddingModel) -> np.ndarray:
    """Closed-form ``qbar(x, a) = E_{p(e|a)} qbar(x, e)`` for every (context, position, action).

    Since ``qbar`` is additive over dimensions the expectation factorizes:
    ``sum_d sum_v p(e_d = v | a) eta_d sigmoid(.)``. Returns (n, K, max_actions).
    """
    return np.einsum("ndv,kadv->nka", dimension_terms(X, model), emb.probs)


def base_reward_action(x: np.ndarray, k: int, a: int, model: RewardModel, emb: EmbeddingModel) -> float:
    return float(base_reward_actions(np.asarray(x)[None, :], model, emb)[0, k, a])


def interaction_coefficients(c: BehaviorMatrix, G: np.ndarray) -> np.ndarray:
    """Linear map from base values to expected rewards: ``q = C @ b``.

    ``C[k, k] = c[k, k]`` and ``C[k, l] = c[k, l] * G[k, l] / |k - l|`` off the diagonal.
    """
    K = G.shape[0]
    dist = np.abs(np.arange(K)[:, None] - np.arange(K)[None, :]).astype(np.float64)
    np.fill_diagonal(dist, 1.0)
    scale = G / dist
    np.fill_diagonal(scale, 1.0)
    return c.c * scale


def expected_reward_embedding(
    x: np.ndarray, e: np.ndarray, behavior_kind: Union[str, BehaviorMatrix], model: RewardModel
) -> np.ndarray:
    """``q_k(x, e) = qbar(x, e(k)) + sum_l |k-l|^-1 G(k, l) qbar(x, e(l))`` over the behavior's ``l``."""
    e = np.asarray(e, dtype=np.int64)
    K = e.shape[0]
    c = behavior_kind if isinstance(behavior_kind, BehaviorMatrix) else make_behavior_matrix(behavior_kind, K)
    b = base_reward_embeddings(np.asarray(x)[None, :], e[None], model)[0]
    return interaction_coefficients(c, model.G) @ b


def expected_reward_matrix(
    x: np.ndarray, a: np.ndarray, c: BehaviorMatrix, model: RewardModel, emb: EmbeddingModel
) -> np.ndarray:
    """``q_k(x, a, c)`` on action-level base rewards ``qbar(x, a(l))``."""
    a = np.asarray(a, dtype=np.int64)
    table = base_reward_actions(np.asarray(x)[None, :], model, emb)[0]
    b = table[np.arange(len(a)), a]
    return interaction_coefficients(c, model.G) @ b


# --------------------------------------------------------------------------- environment


@dataclass(frozen=True, eq=False)
class SyntheticEnvironment:
    config: ExperimentConfig
    reward_model: RewardModel
    embedding_model: EmbeddingModel
    logging_support: Optional[np.ndarray] = None
    context_pool: Optional[np.ndarray] = None

    @property
    def coefficients(self) -> np.ndarray:
        """(Z, K, K) stack of interaction maps, one per catalogue entry."""
        return np.stack([interaction_coefficients(c, self.reward_model.G) for c in self.reward_model.catalogue])

    def base_actions(self, X: np.ndarray) -> np.ndarray:
        return base_reward_actions(X, self.reward_model, self.embedding_model)

    def policies(self, X: np.ndarray) -> Tuple[FactorizedRankingPolicy, FactorizedRankingPolicy]:
        """(logging, target) policy tables for contexts ``X``."""
        table = self.base_actions(X)
        counts = self.config.action_counts
        logging = make_softmax_policy(table, self.config.beta, counts, support=self.logging_support)
        target = make_epsilon_greedy_policy(table, self.config.epsilon, counts)
        return logging, target

    def target_policy(self, X: np.ndarray) -> FactorizedRankingPolicy:
        return self.policies(X)[1]


def _param_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(PARAM_STREAM, block)))


@functools.lru_cache(maxsize=32)
def make_environment(cfg: ExperimentConfig) -> SyntheticEnvironment:
    """Freeze every environment parameter from ``cfg.seed``.

    Each parameter block has its own stream, so changing one setting (say,
    ``n_deficient``) leaves the other blocks untouched.
    """
    cfg.validate()
    K, D, dx = cfg.n_positions, cfg.n_dims, cfg.dim_x
    cats = np.asarray(cfg.category_counts, dtype=np.int64)
    width = int(cats.max())

    rng = _param_rng(cfg.seed, 0)
    latent = rng.standard_normal((D, width, dx))
    eta = rng.uniform(0.0, 1.0, size=D)
    eta = eta / eta.sum()
    rng = _param_rng(cfg.seed, 1)
    M = rng.standard_normal((dx, dx))
    theta_x = rng.standard_normal(dx)
    theta_e = rng.standard_normal(dx)
    G = _param_rng(cfg.seed, 2).uniform(0.0, cfg.interaction_max, size=(K, K))
    emb = gen_embedding_model(cfg.action_counts, D, cats, _param_rng(cfg.seed, 3))

    support = None
    if cfg.n_deficient > 0:
        rng = _param_rng(cfg.seed, 4)
        max_a = max(cfg.action_counts)
        support = np.zeros((K, max_a), dtype=bool)
        for k, count in enumerate(cfg.action_counts):
            removed = rng.choice(count, size=cfg.n_deficient, replace=False)
            support[k, :count] = True
            support[k, removed] = False

    behavior, dist = None, None
    if cfg.catalogue:
        catalogue = tuple(make_behavior_matrix(name, K) for name in cfg.catalogue)
        thetas = _param_rng(cfg.seed, 5).uniform(-1.0, 1.0, size=(len(catalogue), dx))
        dist = BehaviorDistribution(catalogue, thetas, np.full(len(catalogue), cfg.behavior_lambda))
    else:
        behavior = make_behavior_matrix(cfg.behavior, K)

    pool = gen_contexts(cfg.n_contexts, dx, _param_rng(cfg.seed, 6)) if cfg.n_contexts > 0 else None

    model = RewardModel(
        eta=eta,
        M=M,
        theta_x=theta_x,
        theta_e=theta_e,
        latent_e=latent,
        G=G,
        sigma_r=cfg.sigma_r,
        category_counts=cats,
        kind=cfg.reward_kind,
        space=cfg.reward_space,
        behavior=behavior,
        behavior_dist=dist,
    )
    return SyntheticEnvironment(cfg, model, emb, support, pool)


def replication_rng(root_seed: int, index: int) -> np.random.Generator:
    """Independent generator for replication ``index`` of a sweep."""
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=(REPLICATION_STREAM, index)))


def _sample_embeddings(emb: EmbeddingModel, actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    K = actions.shape[1]
    probs = emb.probs[np.arange(K)[None, :], actions]
    return sample_categorical(probs, rng)


def _base_values(
    env: SyntheticEnvironment, X: np.ndarray, ctx_rows: np.ndarray, actions: np.ndarray, embeddings: np.ndarray,
    table: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Per-position base values ``b`` (n, K) feeding the interaction map."""
    if env.reward_model.space == "embedding":
        return base_reward_embeddings(X[ctx_rows], embeddings, env.reward_model)
    if table is None:
        table = env.base_actions(X)
    return np.take_along_axis(table[ctx_rows], actions[..., None], axis=2)[..., 0]


def _draw_rewards(q: np.ndarray, model: RewardModel, rng: np.random.Generator) -> np.ndarray:
    if model.kind == "gaussian":
        return q + model.sigma_r * rng.standard_normal(q.shape)
    return (rng.random(q.shape) < expit(q)).astype(np.float64)


def generate_log(
    cfg: ExperimentConfig, rng: np.random.Generator, env: Optional[SyntheticEnvironment] = None
) -> LoggedDataset:
    """Draw ``cfg.n`` samples ``(x, a, e, r)`` from the logging policy.

    Draw order is fixed (contexts, rankings, embeddings, behaviors, rewards),
    so a seeded generator always reproduces the same dataset.
    """
    env = make_environment(cfg) if env is None else env
    n = cfg.n
    if env.context_pool is not None:
        contexts = env.context_pool
        context_index = rng.integers(0, len(contexts), size=n)
    else:
        contexts = gen_contexts(n, cfg.dim_x, rng)
        context_index = np.arange(n)
    table = env.base_actions(contexts)
    counts = cfg.action_counts
    logging = make_softmax_policy(table, cfg.beta, counts, support=env.logging_support)
    target = make_epsilon_greedy_policy(table, cfg.epsilon, counts)

    actions = sample_rankings(logging, context_index, rng)
    embeddings = _sample_embeddings(env.embedding_model, actions, rng)
    model = env.reward_model
    if model.behavior_dist is not None:
        behavior_ids = sample_categorical(model.behavior_probs(contexts[context_index]), rng)
    else:
        behavior_ids = np.zeros(n, dtype=np.int64)
    b = _base_values(env, contexts, context_index, actions, embeddings, table)
    q = np.einsum("nkl,nl->nk", env.coefficients[behavior_ids], b)
    rewards = _draw_rewards(q, model, rng)
    return LoggedDataset(
        contexts=contexts,
        context_index=context_index,
        actions=actions,
        embeddings=embeddings,
        rewards=rewards,
        logging_policy=logging,
        target_policy=target,
        embedding_model=env.embedding_model,
        behavior_ids=behavior_ids,
        behaviors=list(model.catalogue),
        reward_kind=model.kind,
        config_fingerprint=cfg.fingerprint(),
    )


# --------------------------------------------------------------------------- policy value


@dataclass(frozen=True)
class PolicyValue:
    value: float
    se: float
    mode: str
    budget: int


TargetArg = Optional[Union[FactorizedRankingPolicy, Callable[[np.ndarray], FactorizedRankingPolicy]]]


def _target_for(env: SyntheticEnvironment, X: np.ndarray, target: TargetArg) -> FactorizedRankingPolicy:
    if target is None:
        return env.target_policy(X)
    if isinstance(target, FactorizedRankingPolicy):
        if target.n_contexts != len(X):
            raise ValueError("a target policy table needs one row per context of the finite pool")
        return target
    return target(X)


def enumerate_rankings(counts: Sequence[int]) -> np.ndarray:
    """All rankings in lexicographic order, shape (prod counts, K)."""
    return np.array(list(itertools.product(*[range(c) for c in counts])), dtype=np.int64).reshape(-1, len(counts))


def enumerate_embeddings(K: int, category_counts: Sequence[int]) -> np.ndarray:
    """All ranking embeddings in lexicographic order, shape (prod |E_d|^K, K, D)."""
    D = len(category_counts)
    flat = enumerate_rankings(list(category_counts) * K)
    return flat.reshape(-1, K, D)


def _exact_value(env: SyntheticEnvironment, target: TargetArg, cap: int) -> PolicyValue:
    cfg = env.config
    if env.context_pool is None:
        raise ValueError("exact mode needs a finite context pool (n_contexts > 0)")
    counts = cfg.action_counts
    n_rank = int(np.prod(counts, dtype=np.float64))
    n_emb = int(np.prod(cfg.category_counts, dtype=np.float64) ** cfg.n_positions)
    size = len(env.context_pool) * n_rank * n_emb
    if size > cap:
        raise ValueError(f"exact enumeration needs {size:.3e} atoms, above the cap of {cap:.0e}")
    X = env.context_pool
    K = cfg.n_positions
    pi = _target_for(env, X, target)
    rankings = enumerate_rankings(counts)
    emb_rankings = enumerate_embeddings(K, cfg.category_counts)
    probs = env.embedding_model.probs
    # p(e | a) for all (a, e): product over positions and dimensions
    D = cfg.n_dims
    p_e_a = np.ones((len(rankings), len(emb_rankings)))
    for k in range(K):
        for d in range(D):
            p_e_a *= probs[k, rankings[:, k], d][:, emb_rankings[:, k, d]]
    table = env.base_actions(X)
    coeffs = env.coefficients
    pz = env.reward_model.behavior_probs(X)
    per_context = np.empty(len(X))
    for i in range(len(X)):
        p_a = np.prod(pi.probs[i][np.arange(K)[None, :], rankings], axis=1)
        if env.reward_model.space == "embedding":
            b = base_reward_embeddings(np.repeat(X[i : i + 1], len(emb_rankings), 0), emb_rankings, env.reward_model)
            b = np.broadcast_to(b[None], (len(rankings), len(emb_rankings), K))
        else:
            b = table[i][np.arange(K)[None, :], rankings]
            b = np.broadcast_to(b[:, None, :], (len(rankings), len(emb_rankings), K))
        q = np.einsum("zkl,ael->zaek", coeffs, b)
        mean = q if env.reward_model.kind == "gaussian" else expit(q)
        mean = np.einsum("z,zaek->ae", pz[i], mean)
        per_context[i] = np.einsum("a,ae,ae->", p_a, p_e_a, mean)
    return PolicyValue(float(per_context.mean()), 0.0, "exact", size)


def _montecarlo_value(
    env: SyntheticEnvironment, target: TargetArg, budget: int, rng: np.random.Generator, chunk: int
) -> PolicyValue:
    cfg = env.config
    model = env.reward_model
    coeffs = env.coefficients
    K = cfg.n_positions
    total, total_sq, done = 0.0, 0.0, 0
    while done < budget:
        m = min(chunk, budget - done)
        if env.context_pool is not None:
            idx = rng.integers(0, len(env.context_pool), size=m)
            X = env.context_pool
        else:
            X = gen_contexts(m, cfg.dim_x, rng)
            idx = np.arange(m)
        pi = _target_for(env, X, target)
        table = env.base_actions(X)
        pz = model.behavior_probs(X[idx])
        if model.kind == "gaussian":
            # Expected rewards are linear in the base values, so the inner
            # expectation over (a, e) given x is exact: E[b_l | x] = sum_a pi_l(a|x) qbar(x, a).
            mean_b = np.einsum("nka,nka->nk", pi.probs, table)[idx]
            vals = np.einsum("nz,zkl,nl->n", pz, coeffs, mean_b)
        else:
            actions = sample_rankings(pi, idx, rng)
            embeddings = _sample_embeddings(env.embedding_model, actions, rng)
            b = _base_values(env, X, idx, actions, embeddings, table)
            q = np.einsum("zkl,nl->nzk", coeffs, b)
            vals = np.einsum("nz,nzk->n", pz, expit(q))
        total += vals.sum()
        total_sq += np.square(vals).sum()
        done += m
    mean = total / budget
    var = max(total_sq / budget - mean**2, 0.0) * budget / max(budget - 1, 1)
    return PolicyValue(float(mean), float(np.sqrt(var / budget)), "montecarlo", budget)


def true_policy_value(
    cfg: ExperimentConfig,
    target_policy: TargetArg = None,
    mode: str = "montecarlo",
    budget: int = 1_000_000,
    rng: Optional[np.random.Generator] = None,
    cap: int = 1_000_000,
    chunk: int = 50_000,
) -> PolicyValue:
    """Ground-truth ``V(pi) = E[sum_k r(k)]`` of the target policy.

    Parameters
    ----------
    target_policy: policy table, callable or None
        ``None`` uses the environment's epsilon-greedy target. A table is only
        valid with a finite context pool (one row per pool context); a
        callable maps a context array to a policy.
    mode: str
        ``exact`` enumerates pool contexts x rankings x ranking embeddings
        (refused above ``cap`` atoms). ``montecarlo`` averages expected
        rewards over ``budget`` on-policy draws and reports the standard error.
        For Gaussian rewards the draws of ``(a, e)`` are integrated in closed
        form given ``x``; for Bernoulli rewards they are sampled.
    rng: Generator, optional
        Defaults to the dedicated value stream of ``cfg.seed``.
    """
    env = make_environment(cfg)
    if mode == "exact":
        return _exact_value(env, target_policy, cap)
    if mode != "montecarlo":
        raise ValueError(f"mode must be 'exact' or 'montecarlo', got {mode!r}")
    if budget < 2:
        raise ValueError("Monte Carlo budget must be >= 2")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(VALUE_STREAM,)))
    return _montecarlo_value(env, target_policy, budget, rng, chunk)
