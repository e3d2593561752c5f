"""Command-line entry point: ``klident run | sweep | list | export``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, SelectionError
from .experiment import run_scenario, run_sweep
from .scenarios import CATALOG, SWEEPS, list_scenarios, load_scenario, load_sweep

EXIT_OK, EXIT_NO_SELECTION, EXIT_CONFIG = 0, 1, 2


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("duration must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="klident", description="Multi-set identification with divergence-based selection.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=_seed, help="master seed (overrides the configuration)")
        p.add_argument("--out", type=Path, help="output directory (default: ./out/<name>)")
        p.add_argument("--serial", action="store_true", help="run everything in this process")
        p.add_argument("--duration", type=_positive, help="override the simulated duration in seconds")

    run = sub.add_parser("run", help="run a built-in scenario or a scenario JSON file")
    run.add_argument("scenario", help="catalog name or path to a scenario file")
    common(run)

    sweep = sub.add_parser("sweep", help="re-run a scenario over a grid of one tuning parameter")
    sweep.add_argument("config", help="built-in sweep name or path to a sweep file")
    common(sweep)

    sub.add_parser("list", help="list built-in scenarios and sweeps")

    export = sub.add_parser("export", help="write a built-in scenario or sweep as editable JSON")
    export.add_argument("name")
    export.add_argument("path", type=Path, nargs="?", help="destination file (default: stdout)")
    return parser


def _override(config, args):
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.duration is not None:
        config = config.with_duration(args.duration)
    return config


def _cmd_run(args) -> int:
    config = _override(load_scenario(args.scenario), args)
    out = args.out or Path("out") / config.name
    try:
        result = run_scenario(config, out=out, parallel=not args.serial)
    except SelectionError as exc:
        print(f"{config.name}: no selection ({exc}); outputs in {out}", file=sys.stderr)
        return EXIT_NO_SELECTION
    kl, er = result.final_kl(), result.final_error()
    for run in result.runs:
        s = run.set_index
        mark = "*" if s == result.winner else " "
        state = f"failed at step {run.fail_step}" if run.failed else f"KL {kl[s]:.4g}  E_r {er[s]:.4g}"
        print(f"{mark} set {s}: {state}")
    print(f"winner: set {result.winner}; outputs in {out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    sweep = load_sweep(args.config)
    base = _override(sweep.base(), args)
    sweep.scenario = base
    out = args.out or Path("out") / f"sweep_{base.name}_{sweep.parameter}"
    rows = run_sweep(sweep, out=out, parallel=not args.serial)
    for row in rows:
        print(
            f"{sweep.parameter}={row.value:.4g}: winner {row.winner}  "
            f"E_r {row.selected('final_error'):.4g}  |rho| {row.selected('final_rho'):.4g}"
        )
    print(f"outputs in {out}")
    return EXIT_OK if all(row.winner is not None for row in rows) else EXIT_NO_SELECTION


def _cmd_list(args) -> int:
    rows = list_scenarios()
    width = max(len(name) for name, _ in rows)
    for name, text in rows:
        print(f"{name:<{width}}  {text}")
    return EXIT_OK


def _cmd_export(args) -> int:
    if args.name in CATALOG:
        data = load_scenario(args.name).to_dict()
    elif args.name in SWEEPS:
        data = load_sweep(args.name).to_dict()
    else:
        raise ConfigError(f"unknown scenario or sweep {args.name!r}")
    text = json.dumps(data, indent=2) + "\n"
    if args.path is None:
        sys.stdout.write(text)
    else:
        args.path.write_text(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "list": _cmd_list, "export": _cmd_export}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
