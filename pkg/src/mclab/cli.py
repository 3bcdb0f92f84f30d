"""Command line experiment runner.

    mclab <experiment> [--config path.json] [--seed N] [--reps N]
                       [--threads N] [--out DIR]

Writes <out>/replicates.csv (one row per replicate or scan instance) and
<out>/summary.json (experiment, config, estimates, bounds, verdicts, runtime).
Exit code 0 means every verdict passed, 1 means a verdict failed, 2 means the
configuration or the parameter domain was invalid.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .errors import CapacityError, DomainError, InvalidInputError
from .experiments import ExperimentResult, experiment_names, run_experiment


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_reports(result: ExperimentResult, out_dir: Path, runtime_seconds: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "replicates.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(result.header)
        for row in result.rows:
            writer.writerow([_cell(v) for v in row])
    summary = {
        "experiment": result.experiment,
        "config": _jsonable(result.config),
        "estimates": _jsonable(result.estimates),
        "bounds": _jsonable(result.bounds),
        "verdicts": _jsonable(result.verdicts),
        "runtime_seconds": runtime_seconds,
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cell(value) -> str:
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mclab",
        description="Verification experiments for multiplicative coalescent claims.",
    )
    parser.add_argument("experiment", help=f"one of: {', '.join(experiment_names())}")
    parser.add_argument("--config", type=Path, help="JSON file with experiment parameters")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--reps", type=int, help="replicate count override")
    parser.add_argument("--threads", type=int, help="worker count (default: all cores)")
    parser.add_argument("--out", type=Path, default=Path("mclab-out"), help="report directory")
    args = parser.parse_args(argv)

    overrides = {"seed": args.seed, "reps": args.reps, "threads": args.threads}
    start = time.monotonic()
    try:
        file_cfg = {}
        if args.config is not None:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
            if not isinstance(file_cfg, dict):
                raise InvalidInputError("config file must hold a JSON object")
        result = run_experiment(args.experiment, file_cfg, overrides)
    except (InvalidInputError, CapacityError, DomainError) as exc:
        print(f"mclab: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"mclab: cannot read config: {exc}", file=sys.stderr)
        return 2
    runtime = time.monotonic() - start
    write_reports(result, args.out, runtime)
    for verdict in result.verdicts:
        state = "PASS" if verdict["passed"] else "FAIL"
        print(f"[{state}] {result.experiment}: {verdict['name']}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
