"""Command-line entry point.

Usage::

    measflow <command> [--config FILE] [--seed N] [--out DIR] [--traj N] [--dt X]

Commands: simulate, equivalence, born-check, feedback-gs, state-prep,
stability-scan.  Without ``--config`` the command's default preset runs.

Exit codes: 0 success, 1 configuration error, 2 numerical invariant
violation, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import (
    PRESETS,
    ConfigError,
    ExperimentKind,
    InvariantViolation,
    load_config,
    run_experiment,
    write_outputs,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("measflow")


def build_parser():
    parser = argparse.ArgumentParser(prog="measflow", description="Continuous-measurement simulations and checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in ExperimentKind:
        p = sub.add_parser(kind.value, help=f"run a {kind.value} experiment")
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="named preset to start from")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory (default: out/<command>)")
        p.add_argument("--traj", type=int, help="number of trajectories")
        p.add_argument("--dt", type=float, help="time step; sets n_steps = T / dt")
        p.add_argument("--workers", type=int, help="worker threads for trajectory chunks")
        p.add_argument("--max-csv", type=int, help="write CSV files for at most this many trajectories")
        p.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage, which would clash with the numerical code
        if exc.code in (0, None):
            raise
        return EXIT_CONFIG
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    overrides = {
        "preset": args.preset,
        "seed": args.seed,
        "out": args.out,
        "n_traj": args.traj,
        "dt": args.dt,
        "workers": args.workers,
    }
    try:
        cfg = load_config(args.config, args.command, overrides)
        out_dir = cfg.out or f"out/{args.command}"
        output = run_experiment(cfg)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        log.error("numerical invariant violated: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    try:
        max_csv = args.max_csv if args.max_csv is not None else cfg.params.get("max_csv")
        summary = write_outputs(output, out_dir, max_csv)
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    log.info("wrote %d trajectories and summary.json to %s", len(output.trajectories), out_dir)
    log.info(json.dumps(summary["results"], indent=2, sort_keys=True)[:4000])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
