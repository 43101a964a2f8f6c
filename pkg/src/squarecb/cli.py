"""Command line entry point: ``squarecb run | verify-minimax | report``.

Exit codes: 0 success, 1 unexpected failure, 2 usage or configuration
error, 3 certificate falsified, 4 file I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import ExperimentConfig, RunSummary, compare_report, render_csv, render_text, run_experiment
from .minimax import verify_certificate

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_FALSIFIED, EXIT_IO = 0, 1, 2, 3, 4


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    summary = run_experiment(cfg, output_dir=args.output_dir, threads=args.threads)
    print(render_text(compare_report([summary])))
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify_certificate(
        args.trials,
        (args.k_min, args.k_max),
        (args.gamma_min, args.gamma_max),
        mu_factor=args.mu_factor,
        seed=args.seed,
        worst_case=args.worst_case,
    )
    text = report.to_json()
    if args.output:
        Path(args.output).write_text(text)
    print(text)
    return EXIT_OK if report.certificate else EXIT_FALSIFIED


def cmd_report(args) -> int:
    summaries = [RunSummary.load(p) for p in args.summaries]
    rows = compare_report(summaries)
    print(render_text(rows))
    if args.csv:
        Path(args.csv).write_text(render_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="squarecb", description="SquareCB contextual bandit experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configured experiment over its seeds")
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--output-dir", default=None, help="overrides output_dir in the config")
    p.add_argument("--threads", type=int, default=1, help="worker processes for seeds")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-minimax", help="randomised check of the per-round 2K/gamma certificate")
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--gamma-min", type=float, default=1.0)
    p.add_argument("--gamma-max", type=float, default=1000.0)
    p.add_argument("--mu-factor", type=float, default=1.0, help="mu = mu_factor * K")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--worst-case", action="store_true", help="use the exact maximising f* per instance")
    p.add_argument("--output", default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="compare run summaries side by side")
    p.add_argument("summaries", nargs="*", help="summary.json files")
    p.add_argument("--csv", default=None, help="also write the table as CSV")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
