"""Factorized ranking policies: construction, pmf evaluation and sampling.

A ranking policy factorizes over positions, ``pi(a|x) = prod_k pi(a(k)|x)``.
Policies are materialized as probability tables of shape
``(n_contexts, K, max_actions)``; entries past a position's action count are
padding and always hold probability zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

ROW_TOLERANCE = 1e-12

KINDS = ("softmax", "epsilon_greedy", "uniform", "table")


class PolicyError(ValueError):
    """Raised for invalid policy inputs."""


def _action_counts(table: np.ndarray, action_counts: Optional[Sequence[int]]) -> np.ndarray:
    n_pos, width = table.shape[-2], table.shape[-1]
    if action_counts is None:
        return np.full(n_pos, width, dtype=np.int64)
    counts = np.asarray(action_counts, dtype=np.int64)
    if counts.shape != (n_pos,) or counts.min() < 1 or counts.max() > width:
        raise PolicyError(f"action_counts {counts.tolist()} incompatible with table width {width}")
    return counts


def _padding_mask(counts: np.ndarray, width: int) -> np.ndarray:
    """Boolean (K, width) mask, True where the action index is valid."""
    return np.arange(width)[None, :] < counts[:, None]


@dataclass(frozen=True, eq=False)
class FactorizedRankingPolicy:
    """Per-context, per-position categorical distributions over unique actions.

    Attributes
    ----------
    probs: ndarray, shape (n_contexts, K, max_actions)
        ``probs[i, k, a]`` is the probability of action ``a`` at position ``k``
        for context ``i``.
    kind: str
        One of ``softmax``, ``epsilon_greedy``, ``uniform`` or ``table``.
    params: dict
        Construction parameters (``beta`` or ``epsilon``).
    action_counts: ndarray, shape (K,)
        Number of valid actions per position.
    """

    probs: np.ndarray
    kind: str = "table"
    params: dict = field(default_factory=dict)
    action_counts: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 3:
            raise PolicyError(f"policy table must be 3-d (contexts, K, actions), got {probs.shape}")
        if not np.all(np.isfinite(probs)) or probs.min() < 0:
            raise PolicyError("policy table must hold finite non-negative probabilities")
        counts = _action_counts(probs, self.action_counts)
        if np.any(probs[:, ~_padding_mask(counts, probs.shape[2])] != 0):
            raise PolicyError("padding entries beyond action_counts must be zero")
        row_sums = probs.sum(axis=2)
        if np.any(np.abs(row_sums - 1.0) > ROW_TOLERANCE):
            worst = float(np.abs(row_sums - 1.0).max())
            raise PolicyError(f"policy rows must sum to 1 (max deviation {worst:.3e})")
        if self.kind not in KINDS:
            raise PolicyError(f"unknown policy kind {self.kind!r}")
        probs.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "action_counts", counts)

    @property
    def n_contexts(self) -> int:
        return self.probs.shape[0]

    @property
    def n_positions(self) -> int:
        return self.probs.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FactorizedRankingPolicy):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.params == other.params
            and np.array_equal(self.action_counts, other.action_counts)
            and np.array_equal(self.probs, other.probs)
        )

    def subset(self, context_index: np.ndarray) -> "FactorizedRankingPolicy":
        """Policy restricted to (and reindexed by) the given contexts."""
        return FactorizedRankingPolicy(
            self.probs[np.asarray(context_index)], self.kind, dict(self.params), self.action_counts
        )


def _check_table(base_reward_table: np.ndarray) -> np.ndarray:
    table = np.asarray(base_reward_table, dtype=np.float64)
    if table.ndim == 2:
        table = table[None]
    if table.ndim != 3:
        raise PolicyError(f"base reward table must be (contexts, K, actions), got {table.shape}")
    if np.isnan(table).any():
        raise PolicyError("base reward table contains NaN")
    return table


def make_softmax_policy(
    base_reward_table: np.ndarray,
    beta: float,
    action_counts: Optional[Sequence[int]] = None,
    support: Optional[np.ndarray] = None,
) -> FactorizedRankingPolicy:
    """Softmax policy ``exp(beta * q) / sum exp(beta * q)`` per (context, position).

    Parameters
    ----------
    base_reward_table: array-like, shape (n_contexts, K, max_actions) or (K, max_actions)
        Base rewards of each unique action.
    beta: float
        Inverse temperature; negative values give an anti-optimal policy.
    action_counts: sequence of int, optional
        Valid actions per position; defaults to the full table width.
    support: bool array, shape (K, max_actions), optional
        Actions allowed to receive probability. Excluded actions get exactly
        zero and the remaining mass is renormalized.
    """
    table = _check_table(base_reward_table)
    counts = _action_counts(table, action_counts)
    mask = _padding_mask(counts, table.shape[2])
    if support is not None:
        mask = mask & np.asarray(support, dtype=bool)
        if not mask.any(axis=1).all():
            raise PolicyError("support leaves a position without any action")
    logits = np.where(mask[None], beta * table, -np.inf)
    logits = logits - logits.max(axis=2, keepdims=True)
    unnorm = np.exp(logits)
    probs = unnorm / unnorm.sum(axis=2, keepdims=True)
    return FactorizedRankingPolicy(probs, "softmax", {"beta": float(beta)}, counts)


def make_epsilon_greedy_policy(
    base_reward_table: np.ndarray,
    epsilon: float,
    action_counts: Optional[Sequence[int]] = None,
) -> FactorizedRankingPolicy:
    """``(1 - eps) * 1{a = argmax q} + eps / |A_k|``; ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise PolicyError(f"epsilon must lie in [0, 1], got {epsilon}")
    table = _check_table(base_reward_table)
    counts = _action_counts(table, action_counts)
    mask = _padding_mask(counts, table.shape[2])
    greedy = np.argmax(np.where(mask[None], table, -np.inf), axis=2)
    probs = np.where(mask[None], epsilon / counts[None, :, None], 0.0)
    probs = np.broadcast_to(probs, table.shape).copy()
    np.put_along_axis(
        probs,
        greedy[..., None],
        np.take_along_axis(probs, greedy[..., None], axis=2) + (1.0 - epsilon),
        axis=2,
    )
    return FactorizedRankingPolicy(probs, "epsilon_greedy", {"epsilon": float(epsilon)}, counts)


def make_uniform_policy(
    n_contexts: int, action_counts: Union[int, Sequence[int]], n_positions: Optional[int] = None
) -> FactorizedRankingPolicy:
    if np.isscalar(action_counts):
        if n_positions is None:
            raise PolicyError("n_positions is required with a scalar action count")
        action_counts = [int(action_counts)] * n_positions
    counts = np.asarray(action_counts, dtype=np.int64)
    mask = _padding_mask(counts, int(counts.max()))
    probs = np.where(mask, 1.0 / counts[:, None], 0.0)
    probs = np.broadcast_to(probs, (n_contexts,) + probs.shape).copy()
    return FactorizedRankingPolicy(probs, "uniform", {}, counts)


def ranking_pmf(policy: FactorizedRankingPolicy, context_index: int, action: Sequence[int]) -> float:
    """Probability of a whole ranking: the product of per-position probabilities."""
    action = np.asarray(action, dtype=np.int64)
    if action.shape != (policy.n_positions,):
        raise PolicyError(f"ranking must have length {policy.n_positions}")
    if np.any(action < 0) or np.any(action >= policy.action_counts):
        raise PolicyError(f"ranking {action.tolist()} out of bounds")
    row = policy.probs[context_index]
    return float(np.prod(row[np.arange(policy.n_positions), action]))


def ranking_pmf_many(
    policy: FactorizedRankingPolicy, context_index: np.ndarray, actions: np.ndarray
) -> np.ndarray:
    """Vectorized :func:`ranking_pmf` over ``n`` (context, ranking) pairs."""
    return np.prod(position_probs(policy, context_index, actions), axis=1)


def position_probs(
    policy: FactorizedRankingPolicy, context_index: np.ndarray, actions: np.ndarray
) -> np.ndarray:
    """``probs[context_index[i], k, actions[i, k]]`` as an (n, K) array."""
    context_index = np.asarray(context_index)
    actions = np.asarray(actions)
    return np.take_along_axis(policy.probs[context_index], actions[..., None], axis=2)[..., 0]


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per row of ``probs`` (any leading shape) by inverse CDF.

    Zero-probability entries are never returned, including when the uniform
    draw lands above a row total that rounds slightly below one.
    """
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1])
    idx = (u[..., None] >= cdf).sum(axis=-1)
    last_positive = probs.shape[-1] - 1 - np.argmax((probs > 0)[..., ::-1], axis=-1)
    return np.minimum(idx, last_positive)


def sample_ranking(
    policy: FactorizedRankingPolicy, context_index: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample one ranking, each position independently from its row."""
    return sample_categorical(policy.probs[context_index], rng)


def sample_rankings(
    policy: FactorizedRankingPolicy, context_index: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Sample one ranking per entry of ``context_index``; returns (n, K) ints."""
    return sample_categorical(policy.probs[np.asarray(context_index)], rng)
