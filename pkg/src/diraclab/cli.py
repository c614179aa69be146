"""Command line harness: one subcommand per experiment, CSV and JSON out.

Artifacts per run: `<out>/<experiment>.csv` with the experiment's table
(UTF-8, RFC 4180 quoting and line endings) and `<out>/verdict.json` with
one record per check in a stable field order.  Exit status: 0 when every
check passes, 1 when a tolerance fails (the failing claim is printed),
2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .config import EXPERIMENT_NAMES, ConfigError, parse_config
from .experiments import run_experiment

_HELP = {
    "blago-identity": "state inner products from local data vs global solves",
    "distance-recovery": "travel-time distances between region points",
    "gauge-determination": "local maps and charts across a gauge pair",
    "kannai": "wave-to-heat transmutation quadrature",
    "chirality-extension": "negative spectrum from the positive side, fiber frames",
    "connection-recovery": "pointwise connection charts from the operator",
    "fractional-roundtrip": "fractional power factorization and solves",
    "cut-time": "ball-inclusion cut time scan along two rays",
}


def default_config_text(name: str) -> str:
    path = resources.files("diraclab").joinpath(f"configs/{name}.cfg")
    return path.read_text(encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diraclab",
        description="run a named experiment and write CSV plus verdict.json",
    )
    sub = parser.add_subparsers(dest="experiment", metavar="experiment")
    for name in EXPERIMENT_NAMES:
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument(
            "--config",
            type=Path,
            default=None,
            help="config file (defaults to the shipped one)",
        )
        sp.add_argument(
            "--out", type=Path, default=Path("out"), help="output directory"
        )
        sp.add_argument(
            "--seed", type=int, default=None, help="override the config seed"
        )
        sp.add_argument(
            "--strict",
            action="store_true",
            help="reject unknown configuration keys",
        )
    return parser


def _cell(value) -> str:
    """Stable, round-trippable text for one CSV cell."""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    try:
        return repr(float(value))
    except (TypeError, ValueError):
        return str(value)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(
            fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n"
        )
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_verdict(path: Path, result, seed: int) -> None:
    records = []
    for c in result.checks:
        records.append(
            {
                "experiment": result.name,
                "claim": c.claim,
                "comparator": c.direction,
                "tolerance": c.tolerance,
                "measured": c.measured,
                "pass": bool(c.passed),
            }
        )
    verdict = {
        "experiment": result.name,
        "seed": seed,
        "pass": bool(result.passed),
        "checks": records,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(verdict, fh, indent=2)
        fh.write("\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.experiment is None:
        parser.print_usage(sys.stderr)
        print("error: pick an experiment subcommand", file=sys.stderr)
        return 2

    try:
        if args.config is not None:
            text = Path(args.config).read_text(encoding="utf-8")
        else:
            text = default_config_text(args.experiment)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2

    try:
        cfg = parse_config(text, strict=args.strict)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if cfg.experiment and cfg.experiment != args.experiment:
        print(
            f"error: config names experiment {cfg.experiment!r} but the "
            f"subcommand is {args.experiment!r}",
            file=sys.stderr,
        )
        return 2
    cfg.experiment = args.experiment
    if args.seed is not None:
        cfg.seed = int(args.seed)

    result = run_experiment(cfg)

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{result.name}.csv", result.columns, result.rows)
    write_verdict(out / "verdict.json", result, cfg.seed)

    for c in result.failing():
        print(
            f"FAILED: {c.claim} (measured {c.measured:.6g}, "
            f"required {c.direction} {c.tolerance:.6g})",
            file=sys.stderr,
        )
    status = "pass" if result.passed else "fail"
    print(f"{result.name}: {status} ({len(result.checks)} checks) -> {out}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
