"""Importance-weighting estimators for ranking policies.

Two families share one estimation step:

* action-weighted (SIPS, IIPS, RIPS, AIPS): the weight at position ``k`` is
  the product of per-position ratios ``pi(a(l)|x) / pi_0(a(l)|x)`` over a
  scope of positions;
* embedding-marginal (MSIPS, MIIPS, MRIPS): the same product over per-position
  marginal ratios ``p_l(e(l)|x, pi) / p_l(e(l)|x, pi_0)`` with
  ``p_l(v|x, pi) = sum_a pi_l(a|x) p(e = v | a)``, optionally restricted to the
  first ``d*`` embedding dimensions.

Because policies and ``p(e|a)`` factorize over positions, the product of
per-position marginal ratios equals the ranking-level marginal ratio. The
``oracle`` module checks this against brute-force marginalization.
"""
from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import BehaviorMatrix, EmbeddingModel, EstimatorSpec, Family, LoggedDataset
from .policy import FactorizedRankingPolicy, position_probs

SCOPES = ("full", "position", "prefix")


class WeightError(ValueError):
    """A logged observation has zero probability under the logging policy."""


@dataclass(frozen=True)
class EstimateReport:
    value: float
    position_values: np.ndarray
    retained_dims: Optional[int] = None


def _check_scope(scope: str) -> None:
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")


def combine_scope(ratios: np.ndarray, scope: str) -> np.ndarray:
    """Per-position ratios (n, K) to weights (n, K) for a scope.

    ``full``: product over all positions; ``position``: the ratio itself;
    ``prefix``: product over positions ``1..k``.
    """
    _check_scope(scope)
    if scope == "position":
        return ratios.copy()
    if scope == "prefix":
        return np.cumprod(ratios, axis=1)
    return np.repeat(np.prod(ratios, axis=1, keepdims=True), ratios.shape[1], axis=1)


def _ratio(num: np.ndarray, den: np.ndarray, what: str) -> np.ndarray:
    zero = den <= 0
    if np.any(zero):
        i, k = np.argwhere(zero)[0]
        raise WeightError(f"sample {i}: zero logging {what} at position {k}")
    return num / den


def action_ratios(ds: LoggedDataset) -> np.ndarray:
    """``pi(a_i(k)|x_i) / pi_0(a_i(k)|x_i)`` as an (n, K) array."""
    num = position_probs(ds.target_policy, ds.context_index, ds.actions)
    den = position_probs(ds.logging_policy, ds.context_index, ds.actions)
    return _ratio(num, den, "probability")


def gips_weights(ds: LoggedDataset, scope: str) -> np.ndarray:
    """Action-level weights for SIPS (``full``), IIPS (``position``) and RIPS (``prefix``)."""
    _check_scope(scope)
    return combine_scope(action_ratios(ds), scope)


def aips_weights(ds: LoggedDataset, behavior: Optional[BehaviorMatrix] = None) -> np.ndarray:
    """Adaptive weights ``w(i, k) = prod_{l : c_i(k, l) = 1} ratio(i, l)``.

    ``behavior=None`` reads the true behavior of each sample from
    ``ds.behavior_ids``; a matrix applies the same behavior to every sample.
    """
    ratios = action_ratios(ds)
    if behavior is None:
        if ds.behavior_ids is None or not ds.behaviors:
            raise ValueError("logged-behavior AIPS needs behavior_ids in the dataset")
        stack = np.stack([b.c for b in ds.behaviors]).astype(bool)
        mask = stack[ds.behavior_ids]
    else:
        if behavior.c.shape != (ds.n_positions,) * 2:
            raise ValueError("behavior matrix does not match the ranking length")
        mask = np.broadcast_to(behavior.c.astype(bool), (ds.n,) + behavior.c.shape)
    return np.prod(np.where(mask, ratios[:, None, :], 1.0), axis=2)


def _truncate(emb: EmbeddingModel, retained_dims: Optional[int]) -> int:
    D = emb.n_dims
    d = D if retained_dims is None else int(retained_dims)
    if not 1 <= d <= D:
        raise ValueError(f"retained_dims must lie in [1, {D}], got {d}")
    return d


def position_marginal(
    policy: FactorizedRankingPolicy,
    emb: EmbeddingModel,
    context_index: int,
    k: int,
    retained_dims: Optional[int] = None,
) -> np.ndarray:
    """Marginal ``p_k(v | x, pi)`` over tuples of the first ``d*`` categories.

    Returns an array with one axis per retained dimension, each of length
    ``max_categories``; padded categories hold zero.
    """
    d = _truncate(emb, retained_dims)
    row = policy.probs[context_index, k]
    probs = emb.probs[k, : row.shape[0], :d]
    out = np.zeros(probs.shape[2:3] * d)
    for a in np.flatnonzero(row):
        joint = probs[a, 0]
        for j in range(1, d):
            joint = np.multiply.outer(joint, probs[a, j])
        out += row[a] * joint
    return out


def observed_marginals(
    policy: FactorizedRankingPolicy, ds: LoggedDataset, max_dims: Optional[int] = None
) -> np.ndarray:
    """``p_k(e_i(k)_{1:d} | x_i, pi)`` for every ``d <= max_dims`` at once; shape (n, K, d).

    Only the observed tuple is needed, so instead of building the full
    categorical table we gather ``p(e_d = e_ikd | a)`` for each candidate
    action, take the running product over ``d`` and average over ``pi``.
    """
    emb = ds.embedding_model
    d = _truncate(emb, max_dims)
    width = policy.probs.shape[2]
    K = ds.n_positions
    out = np.empty((ds.n, K, d))
    for k in range(K):
        # (A, D, E) table for position k, observed categories (n, d)
        table = emb.probs[k, :width, :d]
        cats = ds.embeddings[:, k, :d]
        picked = table[:, np.arange(d)[None, :], cats]  # (A, n, d)
        cum = np.cumprod(picked, axis=2)
        out[:, k, :] = np.einsum("na,and->nd", policy.probs[ds.context_index, k], cum)
    return out


def marginal_ratios_all(ds: LoggedDataset, max_dims: Optional[int] = None) -> np.ndarray:
    """Per-position marginal ratios for every retained-dimension count; (n, K, d)."""
    num = observed_marginals(ds.target_policy, ds, max_dims)
    den = observed_marginals(ds.logging_policy, ds, max_dims)
    zero = den <= 0
    if np.any(zero):
        i, k, _ = np.argwhere(zero)[0]
        raise WeightError(f"sample {i}: zero logging embedding marginal at position {k}")
    return num / den


def gmips_weights(ds: LoggedDataset, scope: str, retained_dims: Optional[int] = None) -> np.ndarray:
    """Marginal weights for MSIPS (``full``), MIIPS (``position``) and MRIPS (``prefix``)."""
    _check_scope(scope)
    d = _truncate(ds.embedding_model, retained_dims)
    ratios = marginal_ratios_all(ds, d)[:, :, d - 1]
    return combine_scope(ratios, scope)


def estimate(ds: LoggedDataset, weights: np.ndarray, self_normalized: bool = False) -> EstimateReport:
    """Position-wise weighted averages and their sum.

    Plain: ``V^(k) = mean_i w(i, k) r_i(k)``. Self-normalized:
    ``V^(k) = sum_i w(i, k) r_i(k) / sum_i w(i, k)``.
    """
    if ds.n < 1:
        raise ValueError("cannot estimate from an empty dataset")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != ds.rewards.shape:
        raise ValueError(f"weights shape {weights.shape} does not match rewards {ds.rewards.shape}")
    if not np.all(np.isfinite(weights)) or weights.min() < 0:
        raise ValueError("weights must be finite and non-negative")
    weighted = (weights * ds.rewards).sum(axis=0)
    if self_normalized:
        total = weights.sum(axis=0)
        if np.any(total <= 0):
            raise ValueError(f"all weights are zero at position {int(np.argmax(total <= 0))}")
        positions = weighted / total
    else:
        positions = weighted / ds.n
    return EstimateReport(float(positions.sum()), positions)


def weights_for(ds: LoggedDataset, spec: EstimatorSpec) -> np.ndarray:
    """Weight matrix of a (non-SLOPE) estimator spec."""
    if spec.family is Family.AIPS:
        return aips_weights(ds, None if spec.use_logged_behavior else spec.behavior)
    if spec.family.marginal:
        return gmips_weights(ds, spec.family.scope, spec.retained_dims)
    return gips_weights(ds, spec.family.scope)


def run_estimator(ds: LoggedDataset, spec: EstimatorSpec) -> EstimateReport:
    if spec.slope:
        from .slope import gmips_with_slope

        return gmips_with_slope(ds, spec.family.scope, spec.delta, spec.retained_dims).report
    report = estimate(ds, weights_for(ds, spec), spec.self_normalized)
    if spec.family.marginal:
        d = _truncate(ds.embedding_model, spec.retained_dims)
        return EstimateReport(report.value, report.position_values, d)
    return report


# --------------------------------------------------------------------------- replication loop


@dataclass
class EstimatorSummary:
    """Replication statistics of one estimator.

    ``mse``, ``squared_bias`` and ``variance`` are normalized by ``V(pi)^2``;
    ``variance`` is the unbiased sample variance, so
    ``mse = squared_bias + variance * (R - 1) / R`` up to rounding, with R the
    number of successful replications. ``reconciliation`` stores the residual.
    """

    name: str
    estimates: np.ndarray
    mse: float
    squared_bias: float
    variance: float
    bias: float
    reconciliation: float
    errors: List[str] = field(default_factory=list)
    retained_dims: List[Optional[int]] = field(default_factory=list)
    seconds: float = 0.0


@dataclass
class EvaluationResult:
    value: float
    value_se: float
    replications: int
    summaries: Dict[str, EstimatorSummary]


def summarize(name: str, estimates: Sequence[float], value: float, errors: Sequence[str] = ()) -> EstimatorSummary:
    est = np.asarray([e for e in estimates if e is not None and np.isfinite(e)], dtype=np.float64)
    scale = value**2 if value != 0 else 1.0
    R = len(est)
    if R == 0:
        nan = float("nan")
        return EstimatorSummary(name, est, nan, nan, nan, nan, nan, list(errors))
    bias = float(est.mean() - value)
    mse = float(np.mean((est - value) ** 2)) / scale
    sq_bias = bias**2 / scale
    variance = float(est.var(ddof=1)) / scale if R >= 2 else 0.0
    recon = mse - (sq_bias + variance * (R - 1) / R)
    return EstimatorSummary(name, est, mse, sq_bias, variance, bias, recon, list(errors))


def resolve_spec(spec: EstimatorSpec, cfg) -> EstimatorSpec:
    """Marginal specs without explicit ``retained_dims`` keep ``D - unobserved_dims`` dimensions."""
    if spec.family.marginal and spec.retained_dims is None and cfg.unobserved_dims > 0:
        return dataclasses.replace(spec, retained_dims=cfg.retained_dims)
    return spec


def _one_replication(args) -> List[tuple]:
    from .synthenv import generate_log, make_environment, replication_rng

    cfg, specs, root_seed, index = args
    ds = generate_log(cfg, replication_rng(root_seed, index), make_environment(cfg))
    out = []
    for spec in (resolve_spec(s, cfg) for s in specs):
        start = time.perf_counter()
        try:
            report = run_estimator(ds, spec)
            out.append((report.value, report.retained_dims, None, time.perf_counter() - start))
        except (ValueError, FloatingPointError, ZeroDivisionError) as exc:
            out.append((None, None, f"rep {index}: {exc}", time.perf_counter() - start))
    return out


def evaluate_estimators(
    specs: Sequence[EstimatorSpec],
    replications: int,
    cfg,
    root_seed: int,
    value: Optional[float] = None,
    value_se: float = 0.0,
    budget: int = 1_000_000,
    n_jobs: int = 1,
) -> EvaluationResult:
    """Run ``replications`` independent datasets through every spec.

    Replication ``i`` draws its data from ``SeedSequence(root_seed)`` stream
    ``i``, so results do not depend on ``n_jobs`` or scheduling. An estimator
    failing in one replication is recorded in its ``errors`` list and left
    out of its statistics. ``value`` defaults to a Monte Carlo estimate with
    ``budget`` draws.
    """
    from .synthenv import true_policy_value

    if replications < 2:
        raise ValueError("replications must be >= 2")
    specs = list(specs)
    if value is None:
        pv = true_policy_value(cfg, budget=budget)
        value, value_se = pv.value, pv.se
    jobs = [(cfg, specs, root_seed, i) for i in range(replications)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_one_replication, jobs, chunksize=max(1, replications // (4 * n_jobs))))
    else:
        rows = [_one_replication(job) for job in jobs]
    summaries: Dict[str, EstimatorSummary] = {}
    for j, spec in enumerate(specs):
        col = [row[j] for row in rows]
        summary = summarize(spec.name, [c[0] for c in col], value, [c[2] for c in col if c[2]])
        summary.retained_dims = [c[1] for c in col]
        summary.seconds = float(sum(c[3] for c in col))
        summaries[spec.name] = summary
    return EvaluationResult(float(value), float(value_se), replications, summaries)
