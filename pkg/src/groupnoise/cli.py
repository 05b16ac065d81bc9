"""Command line entry point.

    groupnoise run CONFIG [--set key=value ...] [--seed N] [--out PATH]
                          [--format csv|json] [--plot PATH | --no-plot] [--timing]
    groupnoise preset NAME [same output options]
    groupnoise presets

Exit status: 0 on success, 2 for a bad config or input, 3 when an exact
computation exceeds its atom budget.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import __version__
from .experiments import PRESETS, ConfigError, load_config, preset, run_experiment
from .groups import GroupError
from .measures import BudgetExceeded, MeasureError
from .report import emit_report, plot_rows, render
from .sampler import SamplerError
from .transport import TransportError
from .wreath import WreathError

EXIT_CONFIG = 2
EXIT_BUDGET = 3
_INPUT_ERRORS = (ConfigError, GroupError, MeasureError, SamplerError, TransportError, WreathError)


def _output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--plot", type=Path, help="figure path (default: --out with suffix .png)")
    p.add_argument("--no-plot", action="store_true", help="do not render a figure")
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="groupnoise", description="Noise sensitivity of random walks on groups.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config", type=Path)
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key (repeatable)")
    _output_args(run)
    pre = sub.add_parser("preset", help="run a named preset")
    pre.add_argument("name")
    _output_args(pre)
    sub.add_parser("presets", help="list presets")
    return ap


def _emit(rows, args) -> None:
    if args.out is None:
        sys.stdout.write(render(rows, args.format))
    else:
        emit_report(rows, args.out, args.format)
    if args.no_plot:
        return
    fig = args.plot or (args.out.with_suffix(".png") if args.out is not None else None)
    if fig is not None and plot_rows(rows, fig) is not None:
        print(f"figure: {fig}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name, (desc, _) in PRESETS.items():
            print(f"{name:24s} {desc}")
        return 0
    try:
        if args.command == "run":
            configs = [load_config(args.config, args.set)]
        else:
            configs = preset(args.name)
        if args.seed is not None:
            configs = [dataclasses.replace(c, seed=args.seed) for c in configs]
        if args.out is None and configs[0].out:
            args.out = Path(configs[0].out)
        rows = []
        for cfg in configs:
            rows.extend(run_experiment(cfg, timing=args.timing))
    except BudgetExceeded as exc:
        print(f"error: {exc} (last completed n = {exc.step})", file=sys.stderr)
        return EXIT_BUDGET
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not rows:
        print("error: experiment produced no rows", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _emit(rows, args)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
