"""Command-line interface: ``levyecf {simulate,estimate,montecarlo,covcheck,replay}``.

Exit codes: 0 success, 1 replay mismatch, 2 configuration error,
3 optimizer non-convergence, 4 identifiability failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import load_config, read_csv_header, read_json, validate_config, write_text
from .exceptions import ConfigError, ConvergenceError, IdentifiabilityError
from .harness import render_estimate, render_montecarlo, render_simulate

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_IDENTIFIABILITY = 4


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return value


def _jobs(text):
    value = int(text)
    if value < 1 and value != -1:
        raise argparse.ArgumentTypeError("jobs must be >= 1 (or -1 for all cores)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyecf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "simulate a series and write series.csv"),
        ("estimate", "fit the configured estimator to a series CSV and write result.json"),
        ("montecarlo", "run replications and write replications.csv and summary.json"),
        ("covcheck", "Monte Carlo check of the reported asymptotic covariance"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--seed", type=_seed, default=None, help="master seed (overrides config.seed)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=_jobs, default=1, help="parallel workers for replications")
        if name == "estimate":
            p.add_argument("--data", default=None, help="series CSV (overrides config.data)")
    p = sub.add_parser("replay", help="re-run the run that produced FILE and compare bit for bit")
    p.add_argument("file", help="series.csv, result.json, replications.csv or summary.json")
    p.add_argument("--out", default=None, help="also write the regenerated files here")
    p.add_argument("--jobs", type=_jobs, default=1)
    return parser


def _render(kind, config, seed, jobs, data_path=None):
    if kind == "simulate":
        return render_simulate(config, seed)
    if kind == "estimate":
        return render_estimate(config, seed, data_path)
    return render_montecarlo(config, seed, jobs)


def _run(args) -> int:
    config = load_config(args.config)
    if config["kind"] != args.command:
        raise ConfigError(f"kind: config is for {config['kind']!r}, command is {args.command!r}")
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    data_path = None
    if args.command == "estimate":
        data_path = Path(args.data) if args.data else Path(args.config).parent / config["data"]
    files = _render(args.command, config, seed, args.jobs, data_path)
    out = Path(args.out)
    for name, text in files.items():
        write_text(out / name, text)
        print(out / name)
    return EXIT_OK


def _replay(args) -> int:
    path = Path(args.file)
    if path.suffix == ".json":
        record = read_json(path)
    else:
        record = read_csv_header(path)
    if "config" not in record or "seed" not in record:
        raise ConfigError(f"{str(path)!r} carries no embedded config and seed")
    config = validate_config(record["config"])
    files = _render(config["kind"], config, record["seed"], args.jobs, record.get("data_path"))
    if path.name not in files:
        raise ConfigError(f"{str(path)!r} is not an output of a {config['kind']!r} run")
    if args.out:
        for name, text in files.items():
            write_text(Path(args.out) / name, text)
    if files[path.name] == path.read_text():
        print(f"replay: {path} reproduced bit-exactly")
        return EXIT_OK
    print(f"replay: {path} differs from the regenerated output", file=sys.stderr)
    return EXIT_MISMATCH


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return _replay(args)
        return _run(args)
    except IdentifiabilityError as exc:
        print(f"identifiability error: {exc}", file=sys.stderr)
        return EXIT_IDENTIFIABILITY
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConfigError, NotImplementedError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
