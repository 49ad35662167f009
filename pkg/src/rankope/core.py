"""Domain types shared across the package.

Logged data is stored column-wise: one array per field, with sample ``i`` at
row ``i``. :meth:`LoggedDataset.sample` gives the record view of one row.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .policy import FactorizedRankingPolicy

ROW_TOLERANCE = 1e-12


class DatasetError(ValueError):
    """Raised when a dataset violates its shape or bound invariants."""


@dataclass(frozen=True, eq=False)
class EmbeddingModel:
    """Categorical embedding distributions ``p(e_d = v | a)`` per position-action.

    ``probs`` has shape (K, max_actions, D, max_categories). Each dimension is
    drawn independently given the action, so ``p(e(k)|a) = prod_d p(e_d|a)``.
    Padded categories (beyond ``category_counts[d]``) have probability zero.
    ``alpha`` keeps the logits the probabilities were derived from, if any.
    """

    probs: np.ndarray
    category_counts: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 4:
            raise DatasetError(f"embedding probs must be (K, actions, D, categories), got {probs.shape}")
        if self.category_counts is None:
            counts = np.full(probs.shape[2], probs.shape[3], dtype=np.int64)
        else:
            counts = np.asarray(self.category_counts, dtype=np.int64)
        if counts.shape != (probs.shape[2],) or counts.min() < 1 or counts.max() > probs.shape[3]:
            raise DatasetError(f"category_counts {counts.tolist()} incompatible with probs {probs.shape}")
        pad = np.arange(probs.shape[3])[None, :] >= counts[:, None]
        if np.any(probs[:, :, pad] != 0):
            raise DatasetError("padded embedding categories must have zero probability")
        if np.any(np.abs(probs.sum(axis=3) - 1.0) > ROW_TOLERANCE) or probs.min() < 0:
            raise DatasetError("embedding category rows must be distributions")
        probs.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "category_counts", counts)
        if self.alpha is not None:
            alpha = np.array(self.alpha, dtype=np.float64)
            alpha.setflags(write=False)
            object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_logits(cls, alpha: np.ndarray, category_counts: Optional[Sequence[int]] = None) -> "EmbeddingModel":
        alpha = np.asarray(alpha, dtype=np.float64)
        counts = (
            np.full(alpha.shape[2], alpha.shape[3], dtype=np.int64)
            if category_counts is None
            else np.asarray(category_counts, dtype=np.int64)
        )
        valid = np.arange(alpha.shape[3])[None, :] < counts[:, None]
        logits = np.where(valid, alpha, -np.inf)
        logits = logits - logits.max(axis=3, keepdims=True)
        unnorm = np.exp(logits)
        return cls(unnorm / unnorm.sum(axis=3, keepdims=True), counts, alpha)

    @property
    def n_positions(self) -> int:
        return self.probs.shape[0]

    @property
    def n_dims(self) -> int:
        return self.probs.shape[2]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingModel):
            return NotImplemented
        same_alpha = (self.alpha is None and other.alpha is None) or (
            self.alpha is not None and other.alpha is not None and np.array_equal(self.alpha, other.alpha)
        )
        return (
            same_alpha
            and np.array_equal(self.category_counts, other.category_counts)
            and np.array_equal(self.probs, other.probs)
        )


@dataclass(frozen=True, eq=False)
class BehaviorMatrix:
    """K x K binary matrix: ``c[k, l] = 1`` if the item at ``l`` affects the reward at ``k``."""

    c: np.ndarray
    name: str = "custom"

    def __post_init__(self) -> None:
        c = np.asarray(self.c)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"behavior matrix must be square, got {c.shape}")
        if not np.isin(c, (0, 1)).all():
            raise ValueError("behavior matrix entries must be 0 or 1")
        c = c.astype(np.int8)
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BehaviorMatrix):
            return NotImplemented
        return self.name == other.name and np.array_equal(self.c, other.c)

    def __hash__(self) -> int:
        return hash((self.name, self.c.tobytes()))


@dataclass(frozen=True)
class LoggedSample:
    """One logged observation ``(x, a, e, r)``."""

    context: np.ndarray
    action: np.ndarray
    embedding: np.ndarray
    reward: np.ndarray
    behavior_id: Optional[int] = None


REWARD_KINDS = ("gaussian", "bernoulli")


@dataclass(eq=False)
class LoggedDataset:
    """Logged bandit data plus the policy tables and embedding model that produced it.

    Attributes
    ----------
    contexts: ndarray, shape (n_contexts, dim_x)
        Context table. Generated data has one context per sample.
    context_index: ndarray, shape (n,)
        Row of ``contexts`` (and of both policy tables) for each sample.
    actions: ndarray, shape (n, K)
        Within-position action indices.
    embeddings: ndarray, shape (n, K, D)
        Observed embedding categories.
    rewards: ndarray, shape (n, K)
    logging_policy, target_policy: FactorizedRankingPolicy
        Tables with one row per context.
    embedding_model: EmbeddingModel
    behavior_ids: ndarray, shape (n,), optional
        Index into ``behaviors`` of the true behavior matrix of each sample.
        Only oracle-AIPS reads it.
    behaviors: list of BehaviorMatrix
    reward_kind: str
        ``gaussian`` or ``bernoulli``.
    config_fingerprint: str
    """

    contexts: np.ndarray
    context_index: np.ndarray
    actions: np.ndarray
    embeddings: np.ndarray
    rewards: np.ndarray
    logging_policy: FactorizedRankingPolicy
    target_policy: FactorizedRankingPolicy
    embedding_model: EmbeddingModel
    behavior_ids: Optional[np.ndarray] = None
    behaviors: list = field(default_factory=list)
    reward_kind: str = "gaussian"
    config_fingerprint: str = ""

    def __post_init__(self) -> None:
        self.contexts = np.asarray(self.contexts, dtype=np.float64)
        self.context_index = np.asarray(self.context_index, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.embeddings = np.asarray(self.embeddings, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if self.behavior_ids is not None:
            self.behavior_ids = np.asarray(self.behavior_ids, dtype=np.int64)
        self.validate()

    @property
    def n(self) -> int:
        return self.actions.shape[0]

    @property
    def n_positions(self) -> int:
        return self.actions.shape[1]

    @property
    def n_dims(self) -> int:
        return self.embeddings.shape[2]

    @property
    def dim_x(self) -> int:
        return self.contexts.shape[1]

    @property
    def action_counts(self) -> np.ndarray:
        return self.logging_policy.action_counts

    @property
    def category_counts(self) -> np.ndarray:
        return self.embedding_model.category_counts

    def validate(self) -> None:
        """Check every shape and bound invariant; raises :class:`DatasetError`."""
        n = self.actions.shape[0]
        if self.contexts.ndim != 2 or not np.all(np.isfinite(self.contexts)):
            raise DatasetError("contexts must be a finite (n_contexts, dim_x) array")
        if self.actions.ndim != 2:
            raise DatasetError("actions must be (n, K)")
        K = self.actions.shape[1]
        D = self.embedding_model.n_dims
        for name, arr, shape in (
            ("context_index", self.context_index, (n,)),
            ("embeddings", self.embeddings, (n, K, D)),
            ("rewards", self.rewards, (n, K)),
        ):
            if arr.shape != shape:
                raise DatasetError(f"{name} has shape {arr.shape}, expected {shape}")
        for name, pol in (("logging_policy", self.logging_policy), ("target_policy", self.target_policy)):
            if pol.n_positions != K or pol.n_contexts != self.contexts.shape[0]:
                raise DatasetError(f"{name} table does not match K={K} and {self.contexts.shape[0]} contexts")
        if not np.array_equal(self.logging_policy.action_counts, self.target_policy.action_counts):
            raise DatasetError("logging and target policies disagree on action counts")
        if self.embedding_model.n_positions != K or self.embedding_model.probs.shape[1] < self.action_counts.max():
            raise DatasetError("embedding model does not cover every position-action")
        if self.reward_kind not in REWARD_KINDS:
            raise DatasetError(f"unknown reward kind {self.reward_kind!r}")
        if n == 0:
            return
        bad = (self.context_index < 0) | (self.context_index >= self.contexts.shape[0])
        _raise_first(bad, "context index out of range")
        bad = ((self.actions < 0) | (self.actions >= self.action_counts[None, :])).any(axis=1)
        _raise_first(bad, "action out of bounds")
        cats = self.category_counts
        bad = ((self.embeddings < 0) | (self.embeddings >= cats[None, None, :])).any(axis=(1, 2))
        _raise_first(bad, "embedding category out of bounds")
        _raise_first(~np.isfinite(self.rewards).all(axis=1), "non-finite reward")
        if self.reward_kind == "bernoulli":
            _raise_first(~np.isin(self.rewards, (0.0, 1.0)).all(axis=1), "binary reward not in {0, 1}")
        if self.behavior_ids is not None:
            if self.behavior_ids.shape != (n,):
                raise DatasetError("behavior_ids must have one entry per sample")
            bad = (self.behavior_ids < 0) | (self.behavior_ids >= len(self.behaviors))
            _raise_first(bad, "behavior id out of range")

    def sample(self, i: int) -> LoggedSample:
        return LoggedSample(
            context=self.contexts[self.context_index[i]],
            action=self.actions[i],
            embedding=self.embeddings[i],
            reward=self.rewards[i],
            behavior_id=None if self.behavior_ids is None else int(self.behavior_ids[i]),
        )

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LoggedDataset):
            return NotImplemented
        arrays = ("contexts", "context_index", "actions", "embeddings", "rewards")
        same_ids = (self.behavior_ids is None and other.behavior_ids is None) or (
            self.behavior_ids is not None
            and other.behavior_ids is not None
            and np.array_equal(self.behavior_ids, other.behavior_ids)
        )
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and same_ids
            and self.logging_policy == other.logging_policy
            and self.target_policy == other.target_policy
            and self.embedding_model == other.embedding_model
            and list(self.behaviors) == list(other.behaviors)
            and self.reward_kind == other.reward_kind
            and self.config_fingerprint == other.config_fingerprint
        )


def _raise_first(bad: np.ndarray, message: str) -> None:
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DatasetError(f"sample {i}: {message}")


class Family(str, enum.Enum):
    SIPS = "SIPS"
    IIPS = "IIPS"
    RIPS = "RIPS"
    AIPS = "AIPS"
    MSIPS = "MSIPS"
    MIIPS = "MIIPS"
    MRIPS = "MRIPS"

    @property
    def marginal(self) -> bool:
        return self in (Family.MSIPS, Family.MIIPS, Family.MRIPS)

    @property
    def scope(self) -> Optional[str]:
        return _SCOPES.get(self)


_SCOPES = {
    Family.SIPS: "full",
    Family.IIPS: "position",
    Family.RIPS: "prefix",
    Family.MSIPS: "full",
    Family.MIIPS: "position",
    Family.MRIPS: "prefix",
}

_SPEC_PATTERN = re.compile(
    r"^(?P<sn>sn)?(?P<family>SIPS|IIPS|RIPS|AIPS|MSIPS|MIIPS|MRIPS)"
    r"(?:@(?P<dims>\d+))?"
    r"(?P<slope>\s*\(w/SLOPE\)|\+slope)?$"
)


@dataclass(frozen=True)
class EstimatorSpec:
    """Estimator family plus options.

    ``retained_dims`` keeps the first ``retained_dims`` embedding dimensions
    (``None`` means all) and only applies to marginal families. ``behavior``
    is required for AIPS; ``None`` there means "use the logged true behavior".
    ``slope`` selects the retained dimensions from data (marginal families).
    """

    family: Family
    self_normalized: bool = False
    retained_dims: Optional[int] = None
    behavior: Optional[BehaviorMatrix] = None
    use_logged_behavior: bool = False
    slope: bool = False
    delta: float = 0.05

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.AIPS:
            if self.behavior is None and not self.use_logged_behavior:
                raise ValueError("AIPS needs a behavior matrix or use_logged_behavior=True")
        elif self.behavior is not None or self.use_logged_behavior:
            raise ValueError("behavior is only meaningful for AIPS")
        if self.slope and not self.family.marginal:
            raise ValueError("SLOPE selection applies to marginal families only")
        if self.slope and self.self_normalized:
            raise ValueError("SLOPE runs on plain (non self-normalized) estimators")
        if self.retained_dims is not None and self.retained_dims < 1:
            raise ValueError("retained_dims must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def name(self) -> str:
        text = ("sn" if self.self_normalized else "") + self.family.value
        if self.family.marginal and self.retained_dims is not None:
            text += f"@{self.retained_dims}"
        if self.family is Family.AIPS and not self.use_logged_behavior:
            text += f"[{self.behavior.name}]"
        if self.slope:
            text += " (w/SLOPE)"
        return text

    @classmethod
    def parse(cls, text: str, delta: float = 0.05) -> "EstimatorSpec":
        """Parse names like ``snSIPS``, ``MRIPS``, ``MSIPS@2`` or ``MRIPS (w/SLOPE)``.

        Plain ``AIPS`` uses the logged true behavior of each sample.
        """
        match = _SPEC_PATTERN.match(text.strip())
        if match is None:
            raise ValueError(f"cannot parse estimator name {text!r}")
        family = Family(match["family"])
        return cls(
            family=family,
            self_normalized=bool(match["sn"]),
            retained_dims=int(match["dims"]) if match["dims"] else None,
            use_logged_behavior=family is Family.AIPS,
            slope=bool(match["slope"]),
            delta=delta,
        )
