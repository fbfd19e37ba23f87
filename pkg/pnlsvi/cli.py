#!/usr/bin/env python3
"""Command-line entry point.

Usage (examples):
  pnlsvi run --seed 0 --K 1000 --profile practical
  pnlsvi sweep --config configs/default.json --out results/sweep.csv --workers 4
  pnlsvi verify --config configs/default.json
  pnlsvi show-mdp --scenario two_state
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import settings
from .algorithm import pnlsvi_report
from .config import SCHEMA_VERSION, ExperimentConfig, load_config
from .errors import PnlsviError
from .experiment import execute_cell, sweep
from .scenarios import SCENARIOS, build_scenario, show_mdp
from .verify import verify

logger = logging.getLogger("pnlsvi.cli")


def write_json(obj: Dict[str, Any], path: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, ensure_ascii=False)
        f.write("\n")
    return p


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {
        "scenario": getattr(args, "scenario", None),
        "profile": getattr(args, "profile", None),
        "mdp_seed": getattr(args, "mdp_seed", None),
    }
    K = getattr(args, "K", None)
    if K is not None:
        overrides["K"] = K if isinstance(K, list) else [K]
    seeds = getattr(args, "seeds", None)
    if seeds is not None:
        overrides["seeds"] = seeds
    if getattr(args, "radius_multiplier", None) is not None:
        overrides["radius_multiplier"] = args.radius_multiplier
    return {k: v for k, v in overrides.items() if v is not None}


def _load(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(args.config, _overrides(args))


def cmd_run(args: argparse.Namespace) -> int:
    config = _load(args)
    K = args.K if args.K is not None else min(config.K)
    output, record = execute_cell(config, K, args.seed)
    document = {**config.as_document(), "c_var": output.params.inputs.c_var}
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": document,
        "record": asdict(record),
        "pnlsvi": pnlsvi_report(output),
    }
    if args.out:
        logger.info("wrote %s", write_json(report, args.out))
    print(json.dumps(report, indent=2))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load(args)
    result = sweep(config, workers=args.workers, progress=not args.quiet and sys.stderr.isatty())
    csv_path = Path(args.out or config.output_csv)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(result.csv, encoding="utf-8")
    summary = {"schema_version": SCHEMA_VERSION, "csv": str(csv_path), **result.summary}
    json_path = write_json(summary, str(csv_path.with_suffix(".json")) if args.out else config.output_json)
    logger.info("wrote %s and %s", csv_path, json_path)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    config = _load(args)
    report = verify(config, include_algorithm=not args.skip_algorithm)
    doc = report.as_dict()
    if args.out:
        write_json(doc, args.out)
    print(json.dumps(doc, indent=2))
    logger.info("verify %s", "passed" if report.passed else "FAILED")
    return report.exit_code


def cmd_show_mdp(args: argparse.Namespace) -> int:
    print(show_mdp(build_scenario(args.scenario, args.mdp_seed or 0)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnlsvi", description="Pessimistic offline value iteration experiments")
    parser.add_argument("--log-level", help="Logging level (overrides PNLSVI_LOG_LEVEL)")
    parser.add_argument("--quiet", action="store_true", help="Only warnings and errors; no progress bar")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="Experiment config JSON (overrides PNLSVI_CONFIG_PATH)")
        p.add_argument("--scenario", choices=sorted(SCENARIOS))
        p.add_argument("--mdp-seed", type=int, help="Generator seed of the scenario MDP")
        p.add_argument("--profile", choices=["paper", "practical", "analytic"], help="Confidence radius profile")
        p.add_argument("--radius-multiplier", type=float, help="Global multiplier on every radius")

    run = sub.add_parser("run", help="Run one (K, seed) cell and print the JSON report")
    common(run)
    run.add_argument("--seed", type=int, required=True, help="Dataset seed")
    run.add_argument("--K", type=int, help="Episodes per half (default: smallest configured K)")
    run.add_argument("--out", help="Also write the report to this JSON file")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="Run every (K, seed) cell; write CSV and JSON summary")
    common(sw)
    sw.add_argument("--K", type=int, nargs="+", help="Episodes per half")
    sw.add_argument("--seeds", type=int, nargs="+", help="Dataset seeds")
    sw.add_argument("--out", help="CSV path; the summary goes next to it as .json")
    sw.add_argument("--workers", type=int, help="Process pool size (overrides PNLSVI_WORKERS)")
    sw.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", help="Run the invariant suite; exit 0 iff every check passes")
    common(ver)
    ver.add_argument("--out", help="Also write the verdicts to this JSON file")
    ver.add_argument("--skip-algorithm", action="store_true", help="Skip the seeded pessimism and sandwich runs")
    ver.set_defaults(func=cmd_verify)

    show = sub.add_parser("show-mdp", help="Print a scenario's tables and optimal policy")
    show.add_argument("--scenario", choices=sorted(SCENARIOS), default="default")
    show.add_argument("--mdp-seed", type=int, default=0)
    show.set_defaults(func=cmd_show_mdp)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging("WARNING" if args.quiet else args.log_level)
    try:
        return args.func(args)
    except PnlsviError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
