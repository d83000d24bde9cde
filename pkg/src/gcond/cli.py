"""Command line: ``gcond run|compare|plot|selftest``."""

from __future__ import annotations

import argparse
import logging
import sys

from gcond.harness.config import OUTPUT_ROOT_ENV, ConfigError, load_config
from gcond.harness.plots import emit_plots
from gcond.harness.runner import compare_methods, run_experiment
from gcond.selftest import run_selftest


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    arts = run_experiment(cfg)
    print(f"wrote {len(arts.methods)} method(s) x {len(arts.seeds)} seed(s) to {arts.output_dir}")
    if args.plot:
        for p in emit_plots(arts.output_dir):
            print(p)
    return 0


def _cmd_compare(args) -> int:
    cfg = load_config(args.config)
    arts, _ = compare_methods(cfg)
    print((arts.output_dir / "summary.txt").read_text(), end="")
    if args.plot:
        for p in emit_plots(arts.output_dir):
            print(p)
    return 0


def _cmd_plot(args) -> int:
    for p in emit_plots(args.run_dir, args.out):
        print(p)
    return 0


def _cmd_selftest(args) -> int:
    results = run_selftest(args.points)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail} ({r.seconds:.2f}s)")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcond",
        description="Multi-task gradient arbitration experiments.",
        epilog=f"Set {OUTPUT_ROOT_ENV} to redirect relative output_dir paths.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every configured method and seed")
    p.add_argument("config", help="path to a YAML experiment config")
    p.add_argument("--plot", action="store_true", help="also render figures")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run methods and write a best-loss summary table")
    p.add_argument("config", help="path to a YAML experiment config")
    p.add_argument("--plot", action="store_true", help="also render figures")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("plot", help="render figures from an existing run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", default=None, help="figure directory (default: <run_dir>/plots)")
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("selftest", help="finite-difference and invariant checks")
    p.add_argument("--points", type=int, default=100, help="random points per gradient check")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
