"""Command-line entry point.

Exit codes: 0 success, 1 unexpected error, 2 configuration error,
3 missing or unusable data, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfg
from . import pipeline as pl
from .decoding import ConvergenceError

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tmrkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "synthesize a cohort"),
                        ("schedule", "recompute cue logs from hypnograms and behavior"),
                        ("analyze", "preprocess, epoch and compute features and statistics"),
                        ("decode", "time-resolved decoding with surrogate ensembles"),
                        ("report", "collect tables and plot-ready files"),
                        ("all", "run every stage in order")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, help="JSON run configuration")
        s.add_argument("--out", type=Path, help="output directory")
        s.add_argument("--seed", type=int, help="override the master seed")
        s.add_argument("--condition", choices=("all", "l3"),
                       help="restrict analysis and decoding to one condition")
        s.add_argument("--threads", type=int, help="numerical library threads")
        s.add_argument("--full-scale", action="store_true",
                       help="8-h nights at 500 Hz with 12 participants per group")
        s.add_argument("--force", action="store_true", help="overwrite a non-empty output")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "schedule":
            s.add_argument("--participant", help="only this participant id")
    return p


def _load(args) -> pl.RunConfig:
    if args.config is not None:
        conf = pl.load_config(args.config)
    elif args.seed is not None:
        conf = pl.default_config(args.seed)
    else:
        raise cfg.ConfigError("master_seed", "missing required field "
                                             "(pass --config or --seed)")
    conf = conf.with_seed(args.seed).with_condition(args.condition)
    if args.full_scale:
        conf = replace(conf, simulation=pl.full_scale(conf.simulation))
    return conf


def _out_dir(args, conf) -> Path:
    out = args.out or (Path(conf.output_dir) if conf.output_dir else None)
    if out is None:
        raise cfg.ConfigError("output_dir", "missing required field (pass --out)")
    return out


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMBA_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        conf = _load(args)
        out = _out_dir(args, conf)
        if args.command == "simulate":
            pl.cmd_simulate(conf, out, args.force)
        elif args.command == "schedule":
            pl.cmd_schedule(conf, out, args.participant)
        elif args.command == "analyze":
            pl.cmd_analyze(conf, out)
        elif args.command == "decode":
            pl.cmd_decode(conf, out)
        elif args.command == "report":
            pl.cmd_report(out, conf)
        else:
            pl.run_all(conf, out, args.force)
    except cfg.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pl.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except pl.StageError as exc:
        cause = exc.cause
        if isinstance(cause, pl.DataError):
            print(f"data error in {exc.stage}: {cause}", file=sys.stderr)
            return EXIT_DATA
        if isinstance(cause, (ConvergenceError, FloatingPointError, ArithmeticError)):
            print(f"numerical failure in {exc.stage}: {cause}", file=sys.stderr)
            return EXIT_NUMERIC
        if isinstance(cause, (OSError, json.JSONDecodeError)):
            print(f"data error in {exc.stage}: {cause}", file=sys.stderr)
            return EXIT_DATA
        if isinstance(cause, ValueError) and "insufficient trials" in str(cause):
            print(f"data error in {exc.stage}: {cause}", file=sys.stderr)
            return EXIT_DATA
        print(f"error in {exc.stage}: {cause}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.command}: done ({out})")
    return EXIT_OK


def main() -> None:
    sys.exit(run())
