"""Command-line driver: one experiment per invocation.

Example::

    schattenlab scaling-sweep --out results/sweep discrete=true
    schattenlab kss --seed 7 cases=20
"""
from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, load_config
from .errors import SchattenLabError
from .experiments import run, write_outputs


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="schattenlab",
                                 description="Schatten-class dispersive estimate experiments")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH", help="key = value configuration file")
        sp.add_argument("--out", metavar="DIR", help="output directory (default results/<name>)")
        sp.add_argument("--seed", type=_u64, help="seed for randomized runs")
        sp.add_argument("--dim", type=int, choices=(1, 2), help="spatial dimension")
        sp.add_argument("--refine", type=int, choices=(0, 1, 2),
                        help="refinement level (halves steps / doubles nodes per level)")
        sp.add_argument("--workers", type=int, help="process pool size for sweep points")
        sp.add_argument("overrides", nargs="*", metavar="KEY=VALUE",
                        help="configuration overrides")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    for key, val in (("seed", args.seed), ("d", args.dim), ("refine", args.refine),
                     ("workers", args.workers), ("out", args.out)):
        if val is not None:
            overrides.append(f"{key}={val}")
    try:
        cfg = load_config(args.experiment, args.config, overrides)
        if args.out is None and cfg.out == "results":
            cfg.out = f"results/{args.experiment}"
        res, seconds = run(cfg)
    except (SchattenLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in write_outputs(cfg, res, seconds):
        print(path)
    for line in res.summary:
        print(line)
    return 0 if res.passed is not False else 1


if __name__ == "__main__":
    sys.exit(main())
