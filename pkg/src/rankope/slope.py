"""Lepski-style selection of the number of retained embedding dimensions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from .core import LoggedDataset
from .estimators import EstimateReport, combine_scope, estimate, marginal_ratios_all

INFLATION = math.sqrt(6.0) - 1.0


@dataclass(frozen=True)
class SlopeCandidate:
    retained_dims: int
    estimate: float
    contributions: np.ndarray
    cnf: float


@dataclass(frozen=True)
class AuditRow:
    """One pairwise check ``|V_j - V_m| <= CNF_j + (sqrt(6) - 1) CNF_m`` (1-based j, m)."""

    j: int
    m: int
    lhs: float
    rhs: float
    passed: bool

    def as_text(self) -> str:
        return f"j={self.j} m={self.m} lhs={self.lhs:.12g} rhs={self.rhs:.12g} pass={int(self.passed)}"


@dataclass
class SlopeSelection:
    """``index`` is the 1-based position of the chosen candidate."""

    index: int
    audit: List[AuditRow]
    cnf_violations: List[int] = field(default_factory=list)


@dataclass
class SlopeReport:
    report: EstimateReport
    retained_dims: int
    candidates: List[SlopeCandidate]
    selection: SlopeSelection


def cnf(contributions: Sequence[float], delta: float = 0.05) -> float:
    """Student-t half-width ``t_{1 - delta/2, n-1} * std / sqrt(n)``."""
    x = np.asarray(contributions, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("cnf needs at least two contributions")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return float(stats.t.ppf(1.0 - delta / 2.0, n - 1) * x.std(ddof=1) / math.sqrt(n))


def slope_select(candidates: Sequence[SlopeCandidate]) -> SlopeSelection:
    """Largest ``j`` such that every earlier ``m < j`` passes the pairwise check.

    Candidate 1 is always admissible. Positions where CNF increases along the
    sequence are listed in ``cnf_violations`` (1-based) but left in place.
    """
    if len(candidates) == 0:
        raise ValueError("slope_select needs at least one candidate")
    audit: List[AuditRow] = []
    chosen = 1
    for j in range(2, len(candidates) + 1):
        cj = candidates[j - 1]
        ok = True
        for m in range(1, j):
            cm = candidates[m - 1]
            lhs = abs(cj.estimate - cm.estimate)
            rhs = cj.cnf + INFLATION * cm.cnf
            passed = lhs <= rhs
            audit.append(AuditRow(j, m, lhs, rhs, passed))
            ok = ok and passed
        if ok:
            chosen = j
    violations = [j for j in range(2, len(candidates) + 1) if candidates[j - 1].cnf > candidates[j - 2].cnf]
    return SlopeSelection(chosen, audit, violations)


def gmips_with_slope(
    ds: LoggedDataset, scope: str, delta: float = 0.05, max_dims: Optional[int] = None
) -> SlopeReport:
    """Marginal estimator whose retained dimensions are chosen by :func:`slope_select`.

    Candidates keep ``D, D-1, ..., 1`` leading dimensions (``max_dims`` caps
    ``D``). Each candidate's CNF uses per-sample sums ``sum_k w(i, k) r_i(k)``
    of the plain estimator.
    """
    ratios = marginal_ratios_all(ds, max_dims)
    D = ratios.shape[2]
    candidates = []
    reports = []
    for d in range(D, 0, -1):
        weights = combine_scope(ratios[:, :, d - 1], scope)
        contributions = (weights * ds.rewards).sum(axis=1)
        report = estimate(ds, weights)
        reports.append(report)
        spread = cnf(contributions, delta) if ds.n >= 2 else 0.0
        candidates.append(SlopeCandidate(d, report.value, contributions, spread))
    selection = slope_select(candidates)
    chosen = candidates[selection.index - 1]
    base = reports[selection.index - 1]
    report = EstimateReport(base.value, base.position_values, chosen.retained_dims)
    return SlopeReport(report, chosen.retained_dims, candidates, selection)
