"""Command-line entry points: simulate, analyze, balance, match.

Exit codes: 0 on success, 1 on configuration errors, 2 on numerical
failures (balancing infeasibility, an arm failing every replication).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .balance import BalanceError, write_weights_csv
from .harness import (
    AnalysisConfig,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    analyze_panel,
    emit_report,
    match_only,
    run_experiment,
    solve_weights_only,
)
from .matching import write_matches_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebdid",
        description=(
            "Entropy-balanced difference-in-differences: simulation grids, "
            "panel analysis, and weights/match exports."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment config")
    sim.add_argument("config", help="experiment config JSON path")
    sim.add_argument("--seed", type=int, default=None, help="override config seed")
    sim.add_argument("--threads", type=int, default=1, help="worker threads")
    sim.add_argument("--out", default="out", help="output directory")
    sim.add_argument(
        "--format",
        default="csv,json,plotdata",
        help="comma-separated subset of csv,json,plotdata",
    )

    ana = sub.add_parser("analyze", help="run the panel analysis workflow")
    ana.add_argument("config", help="analysis config JSON path")
    ana.add_argument("panel", nargs="?", default=None, help="panel CSV (overrides config)")
    ana.add_argument("--out", default="out", help="output directory")
    ana.add_argument("--format", default="json,csv,plotdata")

    bal = sub.add_parser("balance", help="weights-only mode: panel in, weights CSV out")
    bal.add_argument("config", help="analysis config JSON path")
    bal.add_argument("panel", nargs="?", default=None)
    bal.add_argument("--out", default="out")
    bal.add_argument("--format", default="csv,json")

    mat = sub.add_parser("match", help="pair-list mode: panel in, match CSV out")
    mat.add_argument("config", help="analysis config JSON path")
    mat.add_argument("panel", nargs="?", default=None)
    mat.add_argument("--out", default="out")
    mat.add_argument("--format", default="csv")
    return parser


def _formats(arg: str):
    return tuple(f.strip() for f in arg.split(",") if f.strip())


def _cmd_simulate(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    report = run_experiment(cfg, threads=max(1, args.threads))
    for path in emit_report(report, args.out, _formats(args.format)):
        print(path)
    return EXIT_OK


def _cmd_analyze(args) -> int:
    cfg = AnalysisConfig.from_file(args.config, panel_override=args.panel)
    report = analyze_panel(cfg)
    for path in emit_report(report, args.out, _formats(args.format)):
        print(path)
    if report.balance_failure:
        print(
            "balancing failed: " + report.balance_failure["message"], file=sys.stderr
        )
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_balance(args) -> int:
    cfg = AnalysisConfig.from_file(args.config, panel_override=args.panel)
    ids, weights = solve_weights_only(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats = _formats(args.format)
    if "csv" in formats:
        path = out / "weights.csv"
        write_weights_csv(ids, weights, path)
        print(path)
    if "json" in formats:
        path = out / "solver_diagnostics.json"
        path.write_text(weights.diagnostics_json())
        print(path)
    return EXIT_OK


def _cmd_match(args) -> int:
    cfg = AnalysisConfig.from_file(args.config, panel_override=args.panel)
    ms = match_only(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "matches.csv"
    write_matches_csv(ms, path)
    print(path)
    if ms.unmatched_treated:
        print(f"unmatched treated units: {len(ms.unmatched_treated)}", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "balance": _cmd_balance,
    "match": _cmd_match,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BalanceError, ExperimentError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
