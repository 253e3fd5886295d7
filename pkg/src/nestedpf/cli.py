"""Command-line entry point.

Verbs map one-to-one onto the experiment runners: simulate, run (with
--no-jitter to freeze parameters), sweep, kalman-check. Each verb takes
--config (JSON), --seed (overrides the config seed) and --out, writes its
CSVs plus manifest.json under --out, and exits nonzero on failure.
"""
from __future__ import annotations

import argparse
import sys

from .experiments import (
    load_config,
    run_kalman_check,
    run_npf,
    run_simulate,
    run_sweep,
)
from .inner_filter import DegenerateWeightsError
from .lorenz63 import DivergenceError
from .nested import DegenerateSystemError


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", default=None, help="JSON experiment config")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument(
        "--out",
        default=None,
        help="output directory (default: output_dir from the config)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nestedpf",
        description="Joint online parameter and state estimation with nested particle filters.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="draw ground truth and observations")
    _add_common(simulate)

    run = commands.add_parser("run", help="run the nested filter on observations")
    _add_common(run)
    run.add_argument(
        "--no-jitter",
        action="store_true",
        help="freeze parameter particles at their prior draws",
    )
    run.add_argument(
        "--observations",
        default=None,
        help="observations CSV from a simulate run (default: simulate internally)",
    )

    sweep = commands.add_parser("sweep", help="error-vs-size sweep with rate fits")
    _add_common(sweep)
    sweep.add_argument(
        "--sizes",
        type=int,
        nargs="+",
        default=None,
        help="outer/inner particle counts to sweep (n = m)",
    )

    check = commands.add_parser(
        "kalman-check", help="bootstrap filter vs exact Kalman recursion"
    )
    _add_common(check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed)
        out_dir = args.out if args.out is not None else cfg.output_dir
        if args.command == "simulate":
            result = run_simulate(cfg, out_dir)
            print(f"wrote {result['n_epochs']} observation epochs to {result['out_dir']}")
        elif args.command == "run":
            result = run_npf(
                cfg,
                out_dir,
                observations_path=args.observations,
                jitter=not args.no_jitter,
            )
            errs = ", ".join(
                f"{name}={err:.4f}" for name, err in result["normalized_errors"].items()
            )
            print(f"final normalized errors: {errs}")
        elif args.command == "sweep":
            result = run_sweep(cfg, out_dir, sizes=args.sizes)
            fits = ", ".join(
                f"{name}: c={fit.c_hat:.4f}" for name, fit in result["fits"].items()
            )
            print(f"rate fits: {fits}")
        else:
            report = run_kalman_check(cfg, out_dir)
            print(
                "kalman-check "
                + ("PASS" if report.passed else "FAIL")
                + f": mean |pf - kalman| = {report.mean_abs_deviation:.4f}, "
                + f"mean log-marginal gap = {report.mean_log_marginal_gap:.4f}"
            )
            if not report.passed:
                return 1
    except (
        ValueError,
        FileNotFoundError,
        DivergenceError,
        DegenerateWeightsError,
        DegenerateSystemError,
    ) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
