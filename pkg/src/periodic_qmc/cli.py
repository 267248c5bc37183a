"""Command line front end: ``periodic-qmc <subcommand>``."""

from __future__ import annotations

import argparse
import logging
import math
import re
import sys
from pathlib import Path

import numpy as np

from .cbc import GeneratingVector, cbc_fast, cbc_naive
from .experiments import (ExperimentConfig, run_cubature_convergence, run_fem_convergence,
                          run_field_moments, run_truncation_study)
from .lattice import LatticeRule, worst_case_error_dual, worst_case_error_kernel
from .spod_weights import pde_spod_weights

_DECAY = re.compile(r"^\s*([0-9.eE+-]+)\s*\*\s*j\s*\^\s*\(?\s*-\s*([0-9.eE+]+)\s*\)?\s*$")


def parse_decay(text: str) -> tuple[float, float]:
    """``"c*j^-beta"`` -> ``(c, beta)``."""
    m = _DECAY.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"decay must look like 'c*j^-beta', got {text!r}")
    return float(m.group(1)), float(m.group(2))


def _weights(decay: tuple[float, float], amin: float, alpha: int, s: int):
    c, beta = decay
    if amin <= 0:
        raise SystemExit("--amin must be positive")
    b = c * np.arange(1, s + 1, dtype=float) ** -beta / (math.sqrt(6.0) * amin)
    return pde_spod_weights(b, alpha, s)


def _cmd_cbc(args) -> int:
    weights = _weights(args.decay, args.amin, args.alpha, args.s)
    build = cbc_naive if args.naive else cbc_fast
    vec = build(args.n, args.s, weights, args.alpha)
    if args.out:
        vec.write(args.out)
    else:
        sys.stdout.write(vec.to_text())
    print(f"P_alpha = {vec.step_values[-1]:.16e}", file=sys.stderr)
    return 0


def _cmd_wce(args) -> int:
    vec = GeneratingVector.read(args.vec)
    alpha = args.alpha if args.alpha is not None else vec.alpha
    s = vec.s if args.s is None else args.s
    weights = _weights(args.decay, args.amin, alpha, s)
    rule = LatticeRule.from_vector(vec, s)
    print(f"kernel  P_alpha = {worst_case_error_kernel(rule, weights, alpha):.16e}")
    if args.dual_check is not None:
        pd = worst_case_error_dual(rule, weights, alpha, args.dual_check)
        print(f"dual(H={args.dual_check}) = {pd:.16e}")
    return 0


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.paper_scale:
        cfg = cfg.paper_scale()
    cfg.threads = args.threads
    if cfg.cache_dir is None:
        cfg.cache_dir = str(Path(args.out_dir) / "cache")
    return cfg


def _report(report, args, name: str) -> int:
    csv_path, _ = report.write(args.out_dir, name)
    sys.stdout.write(report.to_csv())
    slope = report.slope
    print(f"slope: {'n/a' if slope is None else f'{slope:.3f}'}  ({csv_path})")
    return 0


def _cmd_cubature(args) -> int:
    return _report(run_cubature_convergence(_config(args)), args, "cubature")


def _cmd_truncation(args) -> int:
    return _report(run_truncation_study(_config(args)), args, "truncation")


def _cmd_fem_rate(args) -> int:
    cfg = _config(args)
    if args.problem:
        cfg.fem_problem = args.problem
    return _report(run_fem_convergence(cfg), args, f"fem-{cfg.fem_problem}")


def _cmd_moments(args) -> int:
    cfg = _config(args)
    report = run_field_moments(cfg, args.samples)
    csv_path, _ = report.write(args.out_dir)
    sys.stdout.write(report.to_csv())
    print(f"{len(report.flagged)} of {len(report.rows)} rows beyond tolerance ({csv_path})")
    return 1 if report.flagged else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="periodic-qmc",
        description="Rank-1 lattice cubature for PDEs with periodic random coefficients.",
    )
    parser.add_argument("--config", help="experiment config (JSON)")
    parser.add_argument("--out-dir", default="results", help="directory for reports")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for PDE solves")
    parser.add_argument("--paper-scale", action="store_true",
                        help="s=100, m=7, n up to 64007 (very slow)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cbc", help="construct a generating vector")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--decay", type=parse_decay, required=True, help="sup-norms, e.g. '0.1*j^-2'")
    p.add_argument("--amin", type=float, required=True)
    p.add_argument("--out")
    p.add_argument("--naive", action="store_true", help="dense O(n^2) construction")
    p.set_defaults(func=_cmd_cbc)

    p = sub.add_parser("wce", help="worst-case error of a generating vector")
    p.add_argument("--vec", required=True)
    p.add_argument("--alpha", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--decay", type=parse_decay, required=True)
    p.add_argument("--amin", type=float, required=True)
    p.add_argument("--dual-check", type=int, metavar="H",
                   help="also sum the dual lattice over |h|_inf <= H")
    p.set_defaults(func=_cmd_wce)

    sub.add_parser("cubature", help="cubature error against n").set_defaults(func=_cmd_cubature)
    sub.add_parser("truncation", help="truncation error against s").set_defaults(
        func=_cmd_truncation)
    p = sub.add_parser("fem-rate", help="finite element error against h")
    p.add_argument("--problem", choices=("field", "manufactured"))
    p.set_defaults(func=_cmd_fem_rate)
    p = sub.add_parser("moments", help="sampled field moments against closed forms")
    p.add_argument("--samples", type=int)
    p.set_defaults(func=_cmd_moments)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
