"""
Command-line front end: ``replay``, ``simulate`` and ``sweep``.

Exit codes: 0 success, 1 malformed input log, 2 invalid configuration,
script or sweep specification, 3 estimator divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import csv
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, load_json, parse_script, parse_sweep, script_to_json
from .logio import OUTPUT_COLUMNS, MalformedLog, format_float, read_log, write_log
from .montecarlo import error_report, tolerance_sweep
from .pipeline import ACTION_CORRECT, SKIP_REASONS, ReplayResult, replay
from .sim import canonical_script, corrupt, generate_trajectory

EXIT_OK = 0
EXIT_MALFORMED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

logger = logging.getLogger("triad_ahrs")


def write_replay(result: ReplayResult, path: str | Path) -> None:
    """Per-frame estimates; rejected frames are left out."""
    euler = result.euler
    bias = result.bias
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OUTPUT_COLUMNS)
        for k in np.flatnonzero(result.valid):
            w.writerow(
                [format_float(float(v)) for v in (result.t[k], *euler[k], *bias[k])]
                + [int(result.action[k] == ACTION_CORRECT), SKIP_REASONS[result.reason[k]]]
            )


def _summary(result: ReplayResult, log, run: RunConfig) -> tuple[list[str], bool]:
    lines = [
        f"frames: {len(result.t)}",
        f"rejected: {int(np.sum(~result.valid))}",
        f"corrections: {int(np.sum(result.action == ACTION_CORRECT))}",
    ]
    for r, name in enumerate(SKIP_REASONS):
        if r:
            lines.append(f"skipped_{name}: {int(np.sum(result.reason == r))}")
    lines.append(f"covariance_repairs: {result.repairs}")
    lines.append(f"cholesky_failures: {result.cholesky_failures}")
    diverged = result.cholesky_failures >= 2 or not np.all(np.isfinite(result.x[result.valid]))
    if log.has_truth:
        rep = error_report(result, log.truth_euler, run.settle_time_s)
        diverged = diverged or rep.diverged
        lines.append(f"error_window_start_s: {run.settle_time_s:g}")
        if np.isnan(rep.max_error_deg[0]):
            lines.append("error_window: empty (log shorter than the settle time)")
        for axis, mx, rms in zip(("roll", "pitch", "yaw"), rep.max_error_deg, rep.rms_error_deg):
            if not np.isnan(mx):
                lines.append(f"{axis}_error_deg: max {mx:.4f} rms {rms:.4f}")
    lines.append(f"diverged: {'yes' if diverged else 'no'}")
    return lines, diverged


def cmd_replay(args: argparse.Namespace, run: RunConfig) -> int:
    try:
        log = read_log(args.log)
    except FileNotFoundError:
        print(f"error: {args.log}: no such file", file=sys.stderr)
        return EXIT_MALFORMED
    except MalformedLog as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    result = replay(log, run.ahrs)
    if args.out:
        write_replay(result, args.out)
    lines, diverged = _summary(result, log, run)
    print("\n".join(lines))
    return EXIT_DIVERGED if diverged else EXIT_OK


def _trajectory(script_data, run: RunConfig):
    kw = parse_script(script_data)
    return generate_trajectory(
        dt=1.0 / run.sample_rate_hz,
        speed=run.speed_mps,
        mag_ref=run.ahrs.mag_ref,
        gravity=run.ahrs.gravity,
        **kw,
    )


def cmd_simulate(args: argparse.Namespace, run: RunConfig) -> int:
    data = load_json(args.script) if args.script else script_to_json(canonical_script())
    truth = _trajectory(data, run)
    log = corrupt(truth, run.corruption)
    out = args.out or "sim_log.csv"
    write_log(log, out)
    print(f"wrote {len(log)} frames ({truth.t[-1]:g} s) to {out}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, run: RunConfig) -> int:
    plan = parse_sweep(load_json(args.spec))
    data = plan.script or script_to_json(canonical_script())
    truth = _trajectory(data, run)
    estimators = (args.estimator,) if args.estimator else plan.estimators
    out = args.out or "sweep.csv"
    rows = []
    for spec in plan.specs:
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
        for est in estimators:
            res = tolerance_sweep(spec, est, truth, run.ahrs)
            rows.append(res)
            print(f"{res.parameter:12s} {est}: tolerance {res.tolerance:.6g} (pass fraction {res.pass_fraction:.2f})")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("parameter", "estimator", "tolerance", "trials", "pass_fraction", "non_monotone"))
        for r in rows:
            w.writerow((r.parameter, r.estimator, format_float(r.tolerance), r.trials,
                        format_float(r.pass_fraction), int(r.non_monotone)))  # fmt: skip
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="triad-ahrs", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--out", help="output CSV path")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--estimator", choices=("ukf", "ekf"), help="override the configured estimator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("replay", parents=[common], help="run the estimator over a sensor log")
    p.add_argument("log", help="sensor log CSV")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("simulate", parents=[common], help="generate a truth + sensor log")
    p.add_argument("script", nargs="?", help="maneuver script JSON (default: built-in canonical flight)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="tolerance sweeps over error magnitudes")
    p.add_argument("spec", help="sweep specification JSON")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        run = load_config(args.config)
        if args.seed is not None:
            run = run.with_seed(args.seed)
        if args.estimator:
            run = run.with_estimator(args.estimator)
        return args.func(args, run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
