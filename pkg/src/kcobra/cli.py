"""Command-line front end: ``kcobra {simulate,run,time,validate}``.

Exit codes: 0 success, 1 failed validation check, 2 configuration error,
3 too many failed replications.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from .datagen import MODELS, REGIMES, gen_model
from .errors import ConfigError, RunFailedError
from .harness import ExperimentConfig, emit_results, run_experiment, time_optimizers
from .validation import CHECKS, run_checks

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raw = {}
    else:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.replications is not None:
        raw["replications"] = args.replications
    if getattr(args, "workers", None) is not None:
        raw["workers"] = args.workers
    return ExperimentConfig.from_dict(raw)


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def cmd_simulate(args):
    if args.model not in MODELS:
        raise ConfigError(f"model must be one of {sorted(MODELS)}")
    data = gen_model(args.model, args.regime, seed=args.seed or 0, n=args.n)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(data.feature_names) + ["y"])
    for x, y in zip(data.X, data.y):
        w.writerow([repr(float(v)) for v in x] + [repr(float(y))])
    _write(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_run(args):
    cfg = _load_config(args)
    table = run_experiment(cfg)
    text = emit_results(table, args.format, include_timings=args.timings)
    _write(text, args.out)
    if table.failures:
        logging.warning("%d replication(s) failed and were excluded", len(table.failures))
    return EXIT_OK


def cmd_time(args):
    cfg = _load_config(args)
    rows = [time_optimizers(cfg, r) for r in range(cfg.replications)]
    keys = list(rows[0])
    if args.format == "json":
        summary = {
            "rows": rows,
            "median_gd_seconds": float(np.median([r["gd_seconds"] for r in rows])),
            "median_grid_seconds": float(np.median([r["grid_seconds"] for r in rows])),
        }
        text = json.dumps(summary, indent=2) + "\n"
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    else:
        lines = ["| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
        for r in rows:
            lines.append("| " + " | ".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in r.values()) + " |")
        text = "\n".join(lines) + "\n"
    _write(text, args.out)
    return EXIT_OK


def cmd_validate(args):
    results = run_checks(seed=args.seed or 0, names=args.check)
    text = "\n".join(r.line() for r in results) + "\n"
    _write(text, args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kcobra", description="Kernel-weighted consensual aggregation benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON experiment config")
            sp.add_argument("--replications", type=int)
            sp.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output path (default: stdout)")

    sp = sub.add_parser("simulate", help="write a synthetic dataset as CSV")
    common(sp, config=False)
    sp.add_argument("--model", type=int, default=1)
    sp.add_argument("--regime", choices=REGIMES, default="uncorrelated")
    sp.add_argument("--n", type=int, help="number of rows (default: the model's own size)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("run", help="run a replicated experiment")
    common(sp)
    sp.add_argument("--format", choices=("csv", "json", "markdown"), default="json")
    sp.add_argument("--timings", action="store_true", help="include wall-clock times in JSON output")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("time", help="compare gradient descent and grid search run times")
    common(sp)
    sp.add_argument("--format", choices=("csv", "json", "markdown"), default="json")
    sp.set_defaults(func=cmd_time)

    sp = sub.add_parser("validate", help="run the built-in property checks")
    common(sp, config=False)
    sp.add_argument("--check", action="append", choices=sorted(CHECKS), help="run only this check (repeatable)")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailedError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
