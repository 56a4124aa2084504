"""Command-line entry point: ``lsmtrees list`` and ``lsmtrees run``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import (ConfigError, builtin_config, list_experiments, load_config, parse_config,
                          run_experiment, summarize)

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsmtrees",
        description="Bermudan option pricing with tree and forest continuation values.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="show the built-in experiments")
    run = sub.add_parser("run", help="run a config file or a built-in experiment")
    run.add_argument("config", nargs="?", type=Path, help="YAML experiment config")
    run.add_argument("--experiment", help="built-in experiment id (see `lsmtrees list`)")
    run.add_argument("--seed", type=int, help="root seed")
    run.add_argument("--paths", type=int, help="paths for both the fit and the resimulation")
    run.add_argument("--resim-paths", type=int, help="resimulation paths (defaults to --paths)")
    run.add_argument("--out", type=Path, help="CSV output path")
    run.add_argument("--workers", type=int, help="sweep points priced concurrently")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.paths is not None or args.resim_paths is not None:
        out["paths"] = {}
        if args.paths is not None:
            out["paths"]["fit"] = args.paths
        if args.resim_paths is not None or args.paths is not None:
            out["paths"]["resim"] = args.resim_paths or args.paths
    if args.out is not None:
        out["output"] = str(args.out)
    if args.workers is not None:
        out["workers"] = args.workers
    return out


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, description in list_experiments().items():
            print(f"{name:<14} {description}")
        return EXIT_OK

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if (args.config is None) == (args.experiment is None):
            raise ConfigError("run: give exactly one of a config path or --experiment")
        overrides = _overrides(args)
        if args.experiment:
            config = builtin_config(args.experiment, **overrides)
        else:
            config = load_config(args.config)
            if overrides:
                raw = dict(config.raw)
                if "paths" in overrides:
                    overrides["paths"] = {**raw.get("paths", {}), **overrides["paths"]}
                raw.update(overrides)
                config = parse_config(raw)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if config.output is None:
        config.output = Path(f"{config.experiment}.csv")
    rows = run_experiment(config)
    print(summarize(rows))
    print(f"wrote {len(rows)} rows to {config.output}")
    return EXIT_PARTIAL if any(r.error for r in rows) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
