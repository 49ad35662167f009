"""SVG line plots of sweep results (log-scale, one file per metric and behavior)."""
from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Dict, List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sweep import read_results  # noqa: E402

METRICS = ("mse", "squared_bias", "variance")


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_") or "none"


def _number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return math.nan


def emit_plots(results_csv: Union[str, Path], out_dir: Union[str, Path]) -> List[Path]:
    """Render ``<metric>_<behavior>.svg`` files and return their paths.

    Baselines are dashed and embedding-marginal estimators solid. Output
    bytes depend only on the CSV contents.
    """
    rows = read_results(results_csv)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_behavior: Dict[str, List[dict]] = {}
    for row in rows:
        by_behavior.setdefault(row["behavior"], []).append(row)
    if not by_behavior:
        by_behavior["none"] = []

    written = []
    with plt.rc_context({"svg.hashsalt": "rankope", "svg.fonttype": "path", "path.simplify": False}):
        for behavior, subset in sorted(by_behavior.items()):
            estimators = list(dict.fromkeys(r["estimator"] for r in subset))
            variable = subset[0]["variable"] if subset else "value"
            for metric in METRICS:
                fig, ax = plt.subplots(figsize=(5.0, 3.6))
                for name in estimators:
                    pts = [r for r in subset if r["estimator"] == name]
                    xs = [_number(r["value"]) for r in pts]
                    ys = [_number(r[metric]) for r in pts]
                    group = pts[0]["group"]
                    (line,) = ax.plot(
                        xs,
                        ys,
                        linestyle="-" if group == "proposed" else "--",
                        marker="o",
                        label=name,
                    )
                    line.set_gid(f"series-{_slug(name)}")
                ax.set_yscale("log")
                ax.set_xlabel(variable)
                ax.set_ylabel(f"{metric} / V^2")
                ax.set_title(f"{metric} ({behavior})")
                if estimators:
                    ax.legend(loc="best", fontsize="small")
                path = out / f"{metric}_{_slug(behavior)}.svg"
                fig.savefig(path, format="svg", metadata={"Date": None})
                plt.close(fig)
                written.append(path)
    return written
