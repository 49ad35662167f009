"""Experiment sweeps and the results CSV.

The CSV starts with one ``#`` comment line naming the schema version and the
normalization, followed by a header row and one row per (sweep value,
estimator)::

    # rankope-results v1: mse, squared_bias and variance are divided by V(pi)^2
    schema,variable,value,estimator,group,mse,squared_bias,variance,bias,
    reconciliation,n_ok,n_errors,errors,mean_retained_dims,true_value,
    true_value_se,replications,root_seed,config_fingerprint,behavior

``group`` is ``proposed`` for embedding-marginal estimators and ``baseline``
otherwise. Wall-clock timings go to a JSON sidecar so the CSV itself is a
pure function of the sweep config.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .config import SweepConfig
from .core import EstimatorSpec
from .estimators import evaluate_estimators
from .synthenv import true_policy_value

SCHEMA = "v1"
HEADER_COMMENT = "# rankope-results v1: mse, squared_bias and variance are divided by V(pi)^2"
COLUMNS = (
    "schema",
    "variable",
    "value",
    "estimator",
    "group",
    "mse",
    "squared_bias",
    "variance",
    "bias",
    "reconciliation",
    "n_ok",
    "n_errors",
    "errors",
    "mean_retained_dims",
    "true_value",
    "true_value_se",
    "replications",
    "root_seed",
    "config_fingerprint",
    "behavior",
)


@dataclass
class SweepResult:
    rows: List[Dict[str, Any]]
    timings: List[Dict[str, Any]]

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows: List[Dict[str, Any]]) -> str:
    buf = io.StringIO()
    buf.write(HEADER_COMMENT + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def read_results(path: Union[str, Path]) -> List[Dict[str, str]]:
    """Parse a results CSV; raises ``ValueError`` on a malformed file."""
    text = Path(path).read_text()
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty results file")
    reader = csv.DictReader(lines)
    missing = set(COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    rows = list(reader)
    for i, row in enumerate(rows):
        if None in row or any(v is None for v in row.values()):
            raise ValueError(f"{path}: row {i + 1} has the wrong number of fields")
    return rows


def _behavior_label(cfg) -> str:
    if cfg.catalogue:
        return "mix:" + "+".join(cfg.catalogue)
    return cfg.behavior


def _resolved(spec: EstimatorSpec, cfg) -> EstimatorSpec:
    if spec.family.marginal and spec.retained_dims is None:
        return dataclasses.replace(spec, retained_dims=cfg.retained_dims)
    return spec


def run_sweep(sweep: SweepConfig) -> SweepResult:
    """Evaluate every estimator at every sweep value.

    The true value is computed once per sweep value and shared by all
    estimators. Values whose configs differ only in ``unobserved_dims``
    share their replications (the data does not depend on it), and each
    gets its own retained-dimension estimators.
    """
    sweep.validate()
    specs = [EstimatorSpec.parse(name, delta=sweep.delta) for name in sweep.estimators]
    points = [(value, sweep.point(value)) for value in sweep.values]

    groups: Dict[Any, List[int]] = {}
    for i, (_, cfg) in enumerate(points):
        groups.setdefault(cfg.replace(unobserved_dims=0), []).append(i)

    results: Dict[int, Dict[str, Any]] = {}
    timings: List[Dict[str, Any]] = []
    for gen_cfg, members in groups.items():
        start = time.perf_counter()
        pv = true_policy_value(gen_cfg, budget=sweep.value_budget)
        value_seconds = time.perf_counter() - start
        expanded: List[EstimatorSpec] = []
        for i in members:
            for spec in specs:
                expanded.append(_resolved(spec, points[i][1]))
        unique = list(dict.fromkeys(expanded))
        start = time.perf_counter()
        evaluation = evaluate_estimators(
            unique, sweep.replications, gen_cfg, sweep.root_seed, pv.value, pv.se, n_jobs=sweep.n_jobs
        )
        total_seconds = time.perf_counter() - start
        for i in members:
            value, cfg = points[i]
            results[i] = {"value": value, "cfg": cfg, "pv": pv, "by_spec": {}}
            for spec in specs:
                results[i]["by_spec"][spec.name] = evaluation.summaries[_resolved(spec, cfg).name]
            timings.append(
                {
                    "value": value,
                    "true_value_seconds": value_seconds,
                    "group_seconds": total_seconds,
                    "estimator_seconds": {s.name: results[i]["by_spec"][s.name].seconds for s in specs},
                }
            )

    rows = []
    for i in range(len(points)):
        res = results[i]
        cfg = res["cfg"]
        for spec in specs:
            summary = res["by_spec"][spec.name]
            dims = [d for d in summary.retained_dims if d is not None]
            rows.append(
                {
                    "schema": SCHEMA,
                    "variable": sweep.variable,
                    "value": res["value"],
                    "estimator": spec.name,
                    "group": "proposed" if spec.family.marginal else "baseline",
                    "mse": summary.mse,
                    "squared_bias": summary.squared_bias,
                    "variance": summary.variance,
                    "bias": summary.bias,
                    "reconciliation": summary.reconciliation,
                    "n_ok": len(summary.estimates),
                    "n_errors": len(summary.errors),
                    "errors": " | ".join(summary.errors[:3]),
                    "mean_retained_dims": float(np.mean(dims)) if dims else "",
                    "true_value": res["pv"].value,
                    "true_value_se": res["pv"].se,
                    "replications": sweep.replications,
                    "root_seed": sweep.root_seed,
                    "config_fingerprint": cfg.fingerprint(),
                    "behavior": _behavior_label(cfg),
                }
            )
    timings.sort(key=lambda t: [v for v, _ in points].index(t["value"]))
    return SweepResult(rows, timings)


def write_results(result: SweepResult, path: Union[str, Path], timing_path: Optional[Union[str, Path]] = None) -> None:
    path = Path(path)
    path.write_text(result.to_csv())
    timing_path = Path(timing_path) if timing_path else path.with_suffix(path.suffix + ".timing.json")
    timing_path.write_text(json.dumps(result.timings, indent=2, default=str))
