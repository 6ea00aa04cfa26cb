"""
Command-line front end.

Every subcommand prints one JSON document (or writes it to ``--output``).
Floats are written with 17 significant digits and keys in a fixed order,
so an invocation repeated with the same seed produces identical bytes.

Exit codes: 0 success, 2 input/data error, 3 invalid flags.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cvm import bn_stat, cvm_test, mobius_cvm_all_subsets
from .data import DataError, load_csv, parse_blocks, read_csv_matrix
from .dcov import dcor, dcov_stat, dcov_test, kernel, mobius_all_subsets
from .harness import (MODELS, TESTS, ScenarioSpec, calibrate, power_curve,
                      residual_miscalibration_study)
from .resampling import RNG_ALGORITHM, THREADS_ENV, default_threads, fresh_seed
from .serial import acov_spectrum, lag_embed_mobius, residual_serial_test

SCHEMA_VERSION = 1

EXIT_OK, EXIT_INPUT, EXIT_FLAGS = 0, 2, 3

BLOCKS_HELP = (
    "block layout: blocks separated by ';', each a comma list of column "
    "indices (0-based) or half-open ranges a:b, e.g. \"0;1\" or \"0:2;2,4\"")


class FlagError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise FlagError(message)


def _encode(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        s = format(x, ".17g")
        if "." not in s and "e" not in s and "n" not in s:
            s += ".0"
        return s
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}"
                               for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON with 17-significant-digit floats."""
    return _encode(obj) + "\n"


def _add_common(p, blocks=True, alpha=True, reps=True, rank=False):
    p.add_argument("--input", required=True, help="numeric CSV file")
    if blocks:
        p.add_argument("--blocks", required=True, help=BLOCKS_HELP)
    if alpha:
        p.add_argument("--alpha", type=float, default=1.0,
                       help="distance exponent in (0, 2) (default 1.0)")
    if reps:
        p.add_argument("--reps", type=int, default=999,
                       help="resampling replicates; 0 gives statistics only (default 999)")
    if rank:
        p.add_argument("--rank", action="store_true",
                       help="replace observations by normalized ranks R/n first")
    _add_run_flags(p)


def _add_run_flags(p):
    p.add_argument("--seed", type=int, default=None,
                   help="64-bit seed; drawn from system entropy and recorded if omitted")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (falls back to ${THREADS_ENV}); never changes results")
    p.add_argument("--output", default=None, help="write JSON here instead of stdout")


def _add_scenario(p, multi_n: bool):
    p.add_argument("--model", required=True, choices=MODELS)
    if multi_n:
        p.add_argument("--n", required=True, help="comma-separated sample sizes")
    else:
        p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--tests", default="dcov",
                   help=f"comma list from: {', '.join(sorted(TESTS))}")
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--d", type=int, default=2, help="blocks for the independent model")
    p.add_argument("--transform", choices=["cube"], default=None)
    p.add_argument("--reps", type=int, default=499)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--lags", type=int, default=3, help="max lag for the portmanteau test")
    p.add_argument("--csv", default=None, help="also write the rate table as CSV")
    _add_run_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="depstat", description=__doc__.split("\n\n")[0],
                     epilog=BLOCKS_HELP)
    parser.add_argument("--version", action="version", version=f"depstat {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    _add_common(sub.add_parser("dcov", help="two-block distance covariance test"), rank=True)
    _add_common(sub.add_parser("dcor", help="distance correlation (statistic only)"),
                reps=False, rank=True)
    _add_common(sub.add_parser("cvm", help="Cramér–von Mises n*B_n test"), alpha=False)
    _add_common(sub.add_parser("mobius", help="Möbius distance covariance over block subsets"),
                rank=True)
    _add_common(sub.add_parser("mobius-cvm", help="Möbius Cramér–von Mises over block subsets"),
                alpha=False)

    p = sub.add_parser("serial", help="distance autocovariance spectrum and portmanteau test")
    _add_common(p, blocks=False)
    p.add_argument("--lags", type=int, default=5)
    p.add_argument("--residual-ar1", action="store_true",
                   help="test AR(1) residuals with a parametric bootstrap")

    p = sub.add_parser("embed", help="lag-window Möbius test of serial independence")
    _add_common(p, blocks=False)
    p.add_argument("--window", type=int, default=3)

    _add_scenario(sub.add_parser("power", help="Monte Carlo power table"), multi_n=True)
    _add_scenario(sub.add_parser("calibrate", help="null calibration study"), multi_n=False)

    p = sub.add_parser("residual-study",
                       help="naive permutation vs AR(1) bootstrap on residuals")
    p.add_argument("--phi", type=float, default=0.8)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--runs", type=int, default=300)
    p.add_argument("--reps", type=int, default=499)
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--alpha", type=float, default=1.0)
    _add_run_flags(p)
    return parser


def _validate(args) -> None:
    alpha = getattr(args, "alpha", 1.0)
    if not 0.0 < alpha < 2.0:
        raise FlagError(f"--alpha must lie in (0, 2), got {alpha}")
    if getattr(args, "reps", 0) < 0:
        raise FlagError("--reps must be >= 0")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise FlagError("--seed must be a nonnegative 64-bit integer")
    if args.threads is not None and args.threads < 1:
        raise FlagError("--threads must be >= 1")
    level = getattr(args, "level", 0.05)
    if not 0.0 < level < 1.0:
        raise FlagError(f"--level must lie in (0, 1), got {level}")
    for name in ("lags", "window", "runs", "lag"):
        if getattr(args, name, 1) < 1:
            raise FlagError(f"--{name.replace('_', '-')} must be >= 1")
    if args.command in ("power", "calibrate"):
        for t in args.tests.split(","):
            if t not in TESTS:
                raise FlagError(f"unknown test {t!r}")
        if args.command == "power":
            try:
                args.n = [int(v) for v in args.n.split(",")]
            except ValueError:
                raise FlagError("--n must be a comma list of integers") from None
    if getattr(args, "blocks", None) is not None:
        try:
            args.blocks = parse_blocks(args.blocks)
        except DataError as exc:
            raise FlagError(f"--blocks: {exc}") from None


def _header(args) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": args.command}


def _needs_blocks(sample, d=None):
    if d is not None and sample.d != d:
        raise DataError(f"{d} blocks required, got {sample.d}")
    if sample.d < 2:
        raise DataError("at least 2 blocks required")


def _scenario(args, n) -> ScenarioSpec:
    return ScenarioSpec(model=args.model, n=n, runs=args.runs, level=args.level,
                        tests=tuple(args.tests.split(",")), seed=args.seed, rho=args.rho,
                        sigma=args.sigma, phi=args.phi, d=args.d, transform=args.transform,
                        reps=args.reps, alpha=args.alpha, max_lag=args.lags)


def execute(args) -> dict:
    out = _header(args)
    cmd, threads = args.command, args.threads
    if cmd in ("dcov", "dcor", "cvm", "mobius", "mobius-cvm"):
        sample = load_csv(args.input, args.blocks)
        _needs_blocks(sample, 2 if cmd in ("dcov", "dcor", "cvm") else None)
    if cmd == "dcov":
        x, y = sample.blocks()
        out.update(dcov_test(x, y, args.alpha, args.reps, args.seed, rank=args.rank,
                             threads=threads).to_dict())
        out["rank"] = args.rank
    elif cmd == "dcor":
        if args.rank:
            sample = sample.ranked()
        Kx, Ky = (kernel(b, args.alpha) for b in sample.blocks())
        out.update(method="rank-dcor" if args.rank else "dcor", statistic=dcor(Kx, Ky),
                   dcov=dcov_stat(Kx, Ky), n=sample.n, alpha=args.alpha, rank=args.rank)
    elif cmd == "cvm":
        x, y = sample.blocks()
        res = cvm_test(x, y, args.reps, args.seed, threads=threads)
        out.update(res.to_dict())
        out["bn"] = bn_stat(x, y)
    elif cmd == "mobius":
        out.update(mobius_all_subsets(sample, args.alpha, args.reps, args.seed,
                                      rank=args.rank, threads=threads).to_dict())
        out["rank"] = args.rank
    elif cmd == "mobius-cvm":
        out.update(mobius_cvm_all_subsets(sample, args.reps, args.seed,
                                          threads=threads).to_dict())
    elif cmd in ("serial", "embed"):
        series, _ = read_csv_matrix(args.input)
        if cmd == "embed":
            out.update(lag_embed_mobius(series, args.window, args.alpha, args.reps,
                                        args.seed, threads=threads).to_dict())
        elif args.residual_ar1:
            out.update(residual_serial_test(series, args.lags, args.alpha, args.reps,
                                            args.seed, threads=threads).to_dict())
        else:
            out.update(acov_spectrum(series, args.lags, args.alpha, args.reps, args.seed,
                                     threads=threads).to_dict())
    elif cmd == "calibrate":
        result = calibrate(_scenario(args, args.n), threads)
        table = result.pop("table")
        result.pop("pvalues")
        out.update(result)
        out["rows"] = table.to_records()
        if args.csv:
            table.write_csv(args.csv)
    elif cmd == "power":
        table = power_curve([_scenario(args, n) for n in args.n], threads)
        out.update(seed=args.seed, rows=table.to_records())
        if args.csv:
            table.write_csv(args.csv)
    elif cmd == "residual-study":
        out.update(residual_miscalibration_study(args.phi, args.n, args.runs, args.seed,
                                                 reps=args.reps, lag=args.lag,
                                                 alpha=args.alpha, threads=threads))
    out.setdefault("rng", RNG_ALGORITHM)
    return out


def run(argv=None, stdout=None, stderr=None) -> int:
    """Parse ``argv``, execute, emit JSON; returns the exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise FlagError("a subcommand is required")
        _validate(args)
    except FlagError as exc:
        print(f"depstat: error: {exc}", file=stderr)
        return EXIT_FLAGS
    if args.seed is None:
        args.seed = fresh_seed()
    if args.threads is None:
        args.threads = default_threads()
    try:
        out = execute(args)
    except (DataError, ValueError, OSError) as exc:
        print(f"depstat: input error: {exc}", file=stderr)
        return EXIT_INPUT
    text = dumps(out)
    if args.output:
        Path(args.output).write_text(text)
    else:
        stdout.write(text)
    return EXIT_OK


def main() -> None:
    sys.exit(run())
