"""Command line driver.

    fkpp-qsd run <config.yaml> [--seed N] [--workers N] [--out DIR]
    fkpp-qsd analytics --alpha A[,A2,...] --gamma G[,G2,...] [--out FILE]
    fkpp-qsd bench [--quick]

One experiment per invocation; outputs land in the config's output_dir
(overridable with --out).  FKPP_QSD_MAX_WORKERS caps the worker pool.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

from .config import ConfigError, parse_config
from .spectral import theta_star


def _cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    from .experiments import run_experiment

    try:
        return run_experiment(cfg)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _cmd_analytics(args) -> int:
    try:
        alphas = [float(a) for a in args.alpha.split(",")]
        gammas = [float(g) for g in args.gamma.split(",")]
    except ValueError:
        print("error: --alpha/--gamma must be numbers or comma lists",
              file=sys.stderr)
        return 2
    if any(a <= 0 for a in alphas) or any(g <= 0 for g in gammas):
        print("error: alpha and gamma must be positive", file=sys.stderr)
        return 2
    lines = ["alpha,gamma,theta_star,kappa,lambda,A"]
    for g in gammas:
        for a in alphas:
            th = theta_star(g / a)
            kappa = 4.0 * a * th * th
            lines.append(f"{a:.10g},{g:.10g},{th:.10g},{kappa:.10g},"
                         f"{math.exp(-kappa):.10g},{th / math.sin(th):.10g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_bench(args) -> int:
    from .bench import run_benchmark

    run_benchmark(quick=args.quick)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fkpp-qsd",
        description="Desk-scale quasi-stationary experiments for the noisy "
                    "gene-frequency field on the circle")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_an = sub.add_parser("analytics",
                          help="closed-form spectral table to CSV")
    p_an.add_argument("--alpha", required=True)
    p_an.add_argument("--gamma", required=True)
    p_an.add_argument("--out", default=None)
    p_an.set_defaults(func=_cmd_analytics)

    p_b = sub.add_parser("bench",
                         help="compare the compiled and fallback backends")
    p_b.add_argument("--quick", action="store_true")
    p_b.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
