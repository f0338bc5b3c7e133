"""Command-line interface.

Subcommands map one-to-one onto experiment kinds; ``--config`` loads an
INI file and the remaining flags override individual keys.  Exit codes:
0 success, 2 configuration error, 3 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, ExperimentConfig, apply_overrides, parse_config
from .experiments import run_experiment

__all__ = ["main", "entry"]

_SUBCOMMANDS = {
    "sample": "plain reverse-diffusion runs and their quality proxies",
    "guide": "guide-interpolated runs (self-guided unless a guide prior is configured)",
    "ablate": "sweep one guidance parameter over a value list",
    "distill": "mode occupancy with and without guidance under a gappy prior",
    "baseline": "iterative noise-reinitialization baseline runs",
    "nfe": "measured vs analytic denoiser-evaluation counts",
    "cfg-compare": "interpolation guidance comparison on matched seeds",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidelab",
        description="guided-diffusion sampling laboratory with analytic video priors",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="configuration file")
        p.add_argument("--seed", type=int, metavar="U64", help="master seed override")
        p.add_argument("--out", metavar="PATH", help="output CSV path override")
        p.add_argument("--samples", type=int, metavar="N", help="sample count override")
        p.add_argument("--workers", type=int, metavar="N", help="worker process count")
        p.add_argument("--beta", type=float, metavar="B", help="interpolation scale override")
        p.add_argument(
            "--interp-steps", type=int, metavar="I", help="interpolation window override"
        )
        p.add_argument("--tau", type=int, metavar="T", help="guide rollout length override")
        p.add_argument("--gamma", type=float, metavar="G", help="filter cutoff override")
        p.add_argument("--order", type=int, metavar="N", help="filter order override")
        if name == "ablate":
            p.add_argument("--param", metavar="NAME", help="guidance parameter to sweep")
            p.add_argument("--values", metavar="V1,V2,...", help="comma-separated sweep values")
            p.add_argument("--plot", metavar="PATH", help="optional SVG chart path")
        if name == "baseline":
            p.add_argument("--iterations", type=int, metavar="K", help="restart count")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    config = parse_config(args.config) if args.config else ExperimentConfig()
    overrides = dict(
        kind=args.command,
        master_seed=args.seed,
        out=args.out,
        sample_count=args.samples,
        workers=args.workers,
        interpolation_scale=args.beta,
        interpolation_steps=args.interp_steps,
        rollout_steps=args.tau,
        cutoff=args.gamma,
        filter_order=args.order,
    )
    if args.command == "ablate":
        overrides["ablate_param"] = args.param
        if args.values is not None:
            try:
                overrides["ablate_values"] = tuple(
                    float(v) for v in args.values.split(",") if v.strip()
                )
            except ValueError as exc:
                raise ConfigError(f"--values: {exc}") from None
        overrides["plot"] = args.plot
    if args.command == "baseline":
        overrides["baseline_iterations"] = args.iterations
    return apply_overrides(config, **overrides)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve_config(args)
    except ConfigError as exc:
        print(f"guidelab: config error: {exc}", file=sys.stderr)
        return 2
    try:
        path = run_experiment(config)
    except ConfigError as exc:
        print(f"guidelab: config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, AssertionError, ValueError, OSError) as exc:
        print(f"guidelab: runtime error: {exc}", file=sys.stderr)
        return 3
    print(path)
    return 0


def entry() -> None:  # console-script shim
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
