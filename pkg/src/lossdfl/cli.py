"""Command-line runner: ``run``, ``sweep`` and ``summarize``.

Examples::

    lossdfl run --seed 7 --lambda 0.75 --out runs
    lossdfl sweep --rounds 20 --out runs/grid
    lossdfl summarize runs/grid
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import parse_config
from .engine import ExperimentConfig, run_experiment
from .errors import ConfigError, CSVParseError, NumericFailure
from .results import (
    MANIFEST_NAME,
    ROUNDS_NAME,
    SUMMARY_NAME,
    format_table,
    read_rounds_csv,
    summary_table,
    write_manifest,
    write_rounds_csv,
    write_summary,
)

log = logging.getLogger("lossdfl")

SWEEP_LAMBDAS = (0.0, 0.25, 0.5, 0.75)
SWEEP_N_BEST = (1, 5)
SWEEP_CLIENTS = (6, 18)


def default_out() -> Path:
    return Path(os.environ.get("DFL_OUT", "runs"))


def cell_name(config: ExperimentConfig) -> str:
    return f"lambda{config.lam:g}_nbest{config.n_best}_clients{config.clients}"


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment settings (override --config)")
    g.add_argument("--config", type=Path, help="key=value file or a manifest.json to rerun")
    g.add_argument("--clients", type=int)
    g.add_argument("--rounds", type=int)
    g.add_argument("--n-best", type=int, dest="n_best")
    g.add_argument("--lambda", type=float, dest="lambda")
    g.add_argument("--loss-source", choices=("val", "train"), dest="loss_source")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int, dest="batch_size")
    g.add_argument("--learning-rate", "--lr", type=float, dest="learning_rate")
    g.add_argument("--model", choices=("softmax", "mlp"))
    g.add_argument("--hidden", help="comma-separated hidden layer sizes (mlp)")
    g.add_argument("--datasets", help="comma-separated presets (grape, apple, corn) or .csv paths")
    g.add_argument("--train-fraction", type=float, dest="train_fraction")
    g.add_argument("--dim", type=int)
    g.add_argument("--spread", type=float)
    g.add_argument("--heterogeneity", type=float)
    g.add_argument("--sharing", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1, help="client threads per round (results do not depend on it)")
    p.add_argument("--out", type=Path, default=None, help="output root (default: $DFL_OUT or ./runs)")


_CONFIG_DESTS = (
    "clients", "rounds", "n_best", "lambda", "loss_source", "epochs", "batch_size",
    "learning_rate", "model", "hidden", "datasets", "train_fraction", "dim", "spread",
    "heterogeneity", "sharing", "seed",
)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {key: getattr(args, key) for key in _CONFIG_DESTS}
    return parse_config(args.config, overrides)


def run_cell(config: ExperimentConfig, directory: Path, workers: int = 1) -> dict:
    """Run one experiment into ``directory``; the manifest is written last."""
    directory.mkdir(parents=True, exist_ok=True)
    records = run_experiment(config, workers=workers)
    write_rounds_csv(records, directory / ROUNDS_NAME)
    table = write_summary(records, directory / SUMMARY_NAME)
    write_manifest(config, directory)
    return table


def sweep_configs(
    base: ExperimentConfig,
    lambdas: Sequence[float] = SWEEP_LAMBDAS,
    n_best_values: Sequence[int] = SWEEP_N_BEST,
    client_values: Sequence[int] = SWEEP_CLIENTS,
) -> list[ExperimentConfig]:
    return [
        replace(base, lam=lam, n_best=n_best, clients=clients)
        for clients, n_best, lam in itertools.product(client_values, n_best_values, lambdas)
    ]


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    directory = (args.out or default_out()) / (args.name or cell_name(config))
    table = run_cell(config, directory, args.workers)
    print(f"wrote {directory}")
    print(format_table(table))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    base = _config_from_args(args)
    root = args.out or default_out()
    configs = sweep_configs(base, args.lambdas, args.n_best_values, args.client_values)
    for i, config in enumerate(configs, start=1):
        directory = root / cell_name(config)
        if (directory / MANIFEST_NAME).exists():
            print(f"[{i}/{len(configs)}] {directory.name}: done, skipping")
            continue
        table = run_cell(config, directory, args.workers)
        print(f"[{i}/{len(configs)}] {directory.name}: f1 {table['f1']['mean']:.4f} +- {table['f1']['std']:.4f}")
    return 0


def _run_dirs(path: Path) -> list[Path]:
    if path.is_file():
        return [path.parent]
    if (path / ROUNDS_NAME).exists():
        return [path]
    return sorted(p.parent for p in path.glob(f"*/{ROUNDS_NAME}"))


def cmd_summarize(args: argparse.Namespace) -> int:
    dirs = _run_dirs(args.path)
    if not dirs:
        print(f"no {ROUNDS_NAME} found under {args.path}", file=sys.stderr)
        return 1
    tables = {}
    for directory in dirs:
        table = summary_table(read_rounds_csv(directory / ROUNDS_NAME), args.round)
        tables[directory.name] = table
        if not args.json:
            print(f"== {directory.name}")
            print(format_table(table))
    if args.json:
        print(json.dumps(tables if len(tables) > 1 else next(iter(tables.values())), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lossdfl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_config_flags(p_run)
    p_run.add_argument("--name", help="output directory name (default: derived from lambda/n_best/clients)")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="lambda x n_best x clients grid")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--lambdas", type=_floats, default=SWEEP_LAMBDAS)
    p_sweep.add_argument("--n-best-values", type=_ints, default=SWEEP_N_BEST, dest="n_best_values")
    p_sweep.add_argument("--client-values", type=_ints, default=SWEEP_CLIENTS, dest="client_values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_sum = sub.add_parser("summarize", help="mean +- std tables from stored rounds.csv")
    p_sum.add_argument("path", type=Path, help="run directory, rounds.csv, or sweep root")
    p_sum.add_argument("--round", type=int, default=None, help="round to summarize (default: last)")
    p_sum.add_argument("--json", action="store_true")
    p_sum.set_defaults(func=cmd_summarize)
    return parser


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, CSVParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, NumericFailure, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
