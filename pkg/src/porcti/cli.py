"""Command-line entry point: ``porcti [CONFIG] [--preset NAME] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from importlib import resources
from typing import Optional, Sequence

from porcti.config import Experiment, parse_config, parse_config_text
from porcti.errors import ConfigError
from porcti.runner import OUTPUT_ENV, run_matrix

logger = logging.getLogger("porcti")


def preset_names() -> list[str]:
    root = resources.files("porcti") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> Experiment:
    path = resources.files("porcti") / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_config_text(path.read_text(), f"preset:{name}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="porcti", description="Run seeded consensus simulations and write metric CSVs.")
    ap.add_argument("config", nargs="?", help="scenario YAML file")
    ap.add_argument("--preset", help="run a bundled scenario instead of a file")
    ap.add_argument("--list-presets", action="store_true", help="print bundled scenario names and exit")
    ap.add_argument("--out", default=None, help=f"output directory (default: ${OUTPUT_ENV} or ./porcti-out)")
    ap.add_argument("--seed", type=int, action="append", help="override the config's seeds (repeatable)")
    ap.add_argument("--parallelism", "-j", type=int, default=1, help="worker processes (default 1)")
    ap.add_argument("--traces", action="store_true", help="write one JSON-lines trace per run")
    ap.add_argument("--ledgers", action="store_true", help="write every node's ledger file per run")
    ap.add_argument("--check", action="store_true", help="validate the config and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.list_presets:
        print("\n".join(preset_names()))
        return 0
    if (args.config is None) == (args.preset is None):
        print("porcti: give exactly one of CONFIG or --preset", file=sys.stderr)
        return 2
    if args.parallelism < 1:
        print("porcti: --parallelism must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and (min(args.seed) < 0 or len(set(args.seed)) != len(args.seed)):
        print("porcti: --seed values must be distinct and non-negative", file=sys.stderr)
        return 2
    try:
        experiment = load_preset(args.preset) if args.preset else parse_config(args.config)
    except ConfigError as exc:
        print(f"porcti: invalid config: {exc}", file=sys.stderr)
        return 2
    runs = sum(len(args.seed or p.seeds) for p in experiment.points)
    if args.check:
        print(f"{experiment.scenario_id}: {len(experiment.points)} grid points, {runs} runs")
        return 0
    out = args.out or os.environ.get(OUTPUT_ENV) or "porcti-out"
    logger.info("running %d simulations into %s", runs, out)
    result = run_matrix(
        experiment,
        parallelism=args.parallelism,
        out_dir=out,
        traces=args.traces,
        ledgers=args.ledgers,
        seeds=args.seed,
    )
    print(f"{experiment.scenario_id}: {len(result.rows)} runs, {result.errors} errors -> {out}/metrics.csv")
    if result.rows and result.errors == len(result.rows):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
