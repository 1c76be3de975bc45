"""Command-line entry point.

    fedstop run    --config cfg.json [--halt-at-stop] [--out DIR] [--seed-offset K]
    fedstop sweep  --config cfg.json --grid grid.json --out DIR
    fedstop report --in DIR

Exit codes: 0 success, 2 configuration error, 3 a run diverged, 4 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError
from .harness import (FAILED, aggregate, comparison_table, emit_report, read_summary_csv,
                      run_experiment, run_sweep)

EXIT_OK, EXIT_CONFIG, EXIT_FAILED, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("fedstop")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedstop", description="Federated training with data-free early stopping.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configuration for all its seeds")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--halt-at-stop", action="store_true",
                     help="stop training when the data-free rule fires")
    run.add_argument("--out", type=Path, default=Path("fedstop_out"))
    run.add_argument("--seed-offset", type=int, default=0)

    sw = sub.add_parser("sweep", help="run a grid of configurations")
    sw.add_argument("--config", required=True, type=Path)
    sw.add_argument("--grid", required=True, type=Path)
    sw.add_argument("--out", required=True, type=Path)

    rep = sub.add_parser("report", help="rebuild the comparison table from summary.csv")
    rep.add_argument("--in", dest="in_dir", required=True, type=Path)
    return p


def _read_grid(path: Path) -> dict:
    try:
        grid = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(grid, dict):
        raise ConfigError("grid must be a JSON object")
    return grid


def _status(runs) -> int:
    failed = [r for r in runs if r.summary.status == FAILED]
    for r in failed:
        log.error("run %s failed: %s", r.summary.run_id, r.error)
    return EXIT_FAILED if failed else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.halt_at_stop:
                cfg = dataclasses.replace(cfg, halt_at_stop="datafree")
            runs = run_experiment(cfg, seed_offset=args.seed_offset)
            emit_report(runs, args.out)
            sys.stdout.write(comparison_table(aggregate([r.summary for r in runs])))
            return _status(runs)
        if args.command == "sweep":
            cfg = load_config(args.config)
            runs, rows = run_sweep(_read_grid(args.grid), cfg)
            emit_report(runs, args.out)
            sys.stdout.write(comparison_table(rows))
            return _status(runs)
        summaries = read_summary_csv(args.in_dir / "summary.csv")
        table = comparison_table(aggregate(summaries))
        (args.in_dir / "comparison.txt").write_text(table, encoding="utf-8")
        sys.stdout.write(table)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
