"""Command line entry point: ``rankope <verb> [options]``.

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime errors
(including failed oracle checks).
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional, Sequence

from .config import ConfigError, load_experiment, load_sweep
from .core import DatasetError, EstimatorSpec
from .estimators import run_estimator

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

DEFAULT_ESTIMATORS = "SIPS,IIPS,RIPS,AIPS,snSIPS,snIIPS,snRIPS,MSIPS,MIIPS,MRIPS"


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key, e.g. --set experiment.n=2000 or --set beta=-2",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankope", description="Off-policy evaluation benchmarks for rankings.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="draw one logged dataset and save it")
    _add_config(p)
    p.add_argument("--replication", type=int, default=0, help="replication index of the random stream")
    p.add_argument("--root-seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="run estimators on a saved dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--estimators", default=DEFAULT_ESTIMATORS, help="comma separated estimator names")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")

    p = sub.add_parser("sweep", help="run a Monte Carlo sweep and write the results CSV")
    _add_config(p)
    p.add_argument("--out", required=True)
    p.add_argument("--timing", help="timing JSON path (default: <out>.timing.json)")
    p.add_argument("--plots", help="also write SVG plots to this directory")

    p = sub.add_parser("slope", help="select retained embedding dimensions on a saved dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--scope", choices=("full", "position", "prefix"), default="prefix")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--audit", help="write the pairwise audit log here")

    p = sub.add_parser("oracle-verify", help="check the exact identities on tiny environments")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("plot", help="render SVG plots from a results CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cmd_generate(args) -> int:
    from .storage import save_dataset
    from .synthenv import generate_log, replication_rng

    cfg = load_experiment(args.config, args.overrides)
    ds = generate_log(cfg, replication_rng(args.root_seed, args.replication))
    save_dataset(ds, args.out)
    print(f"wrote {ds.n} samples (K={ds.n_positions}, D={ds.n_dims}) to {args.out}; config {cfg.fingerprint()}")
    return EXIT_OK


def _parse_specs(text: str, delta: float) -> List[EstimatorSpec]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    if not names:
        raise ConfigError("no estimators given")
    try:
        return [EstimatorSpec.parse(name, delta=delta) for name in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_evaluate(args) -> int:
    from .storage import load_dataset

    specs = _parse_specs(args.estimators, args.delta)
    ds = load_dataset(args.data)
    out = []
    for spec in specs:
        try:
            report = run_estimator(ds, spec)
            out.append({"estimator": spec.name, "value": report.value, "retained_dims": report.retained_dims, "error": ""})
        except ValueError as exc:
            out.append({"estimator": spec.name, "value": None, "retained_dims": None, "error": str(exc)})
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        for row in out:
            value = "nan" if row["value"] is None else f"{row['value']:.6f}"
            extra = f"  dims={row['retained_dims']}" if row["retained_dims"] is not None else ""
            err = f"  error: {row['error']}" if row["error"] else ""
            print(f"{row['estimator']:<20} {value}{extra}{err}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .sweep import run_sweep, write_results

    sweep = load_sweep(args.config, args.overrides)
    result = run_sweep(sweep)
    write_results(result, args.out, args.timing)
    print(f"wrote {len(result.rows)} rows to {args.out}")
    if args.plots:
        from .plots import emit_plots

        for path in emit_plots(args.out, args.plots):
            print(f"wrote {path}")
    return EXIT_OK


def _cmd_slope(args) -> int:
    from .slope import gmips_with_slope
    from .storage import load_dataset

    ds = load_dataset(args.data)
    res = gmips_with_slope(ds, args.scope, args.delta)
    for i, cand in enumerate(res.candidates, start=1):
        print(f"candidate {i}: dims={cand.retained_dims} estimate={cand.estimate:.6f} cnf={cand.cnf:.6f}")
    print(f"selected candidate {res.selection.index}: dims={res.retained_dims} estimate={res.report.value:.6f}")
    if res.selection.cnf_violations:
        print(f"note: CNF increases at candidates {res.selection.cnf_violations}")
    if args.audit:
        with open(args.audit, "w") as fh:
            for row in res.selection.audit:
                fh.write(row.as_text() + "\n")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    from .oracle import verify_theorems

    checks = verify_theorems(tuple(args.seeds), tol=args.tol)
    for check in checks:
        print(check.as_text())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_RUNTIME


def _cmd_plot(args) -> int:
    from .plots import emit_plots

    for path in emit_plots(args.csv, args.out):
        print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "slope": _cmd_slope,
    "oracle-verify": _cmd_oracle,
    "plot": _cmd_plot,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
