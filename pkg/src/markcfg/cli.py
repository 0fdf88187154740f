"""Command line interface.

    markcfg run --config cfg.json [--seed N] [--samples N] [--out report.json]
    markcfg list-experiments

Exit codes: 0 all checks passed, 1 at least one check failed, 2 invalid
configuration, 3 numerical failure (integrator or quadrature did not meet
its tolerance).
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, NumericsError
from .harness import EXPERIMENTS, ExperimentConfig, run
from .scenarios import SCENARIO_NAMES


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="markcfg",
        description="verification experiments for marked point configurations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("--config", required=True, help="path to the JSON config file")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument(
        "--samples", type=int, default=None, help="override the Monte Carlo sample count"
    )
    p_run.add_argument("--out", default=None, help="write the JSON report here")
    sub.add_parser("list-experiments", help="list experiment and scenario names")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "list-experiments":
        print("experiments:")
        for name in sorted(EXPERIMENTS):
            print(f"  {name}")
        print("scenarios:")
        for name in SCENARIO_NAMES:
            print(f"  {name}")
        return 0

    try:
        config = ExperimentConfig.from_file(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            config.seed = args.seed
        if args.samples is not None:
            if args.samples < 2:
                raise ConfigError("sample count must be at least 2")
            config.n_samples = args.samples
        if args.out is not None:
            config.out = args.out
        report = run(config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericsError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 3

    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        se = f" se={c.se:.3g}" if c.se is not None else ""
        print(
            f"[{status}] {c.name}: estimate={c.estimate:.10g} target={c.target:.10g} "
            f"tol={c.tolerance:.3g}{se}"
        )
        if not c.passed:
            print(f"        identity: {c.identity}")
    print(
        f"{'PASS' if report.passed else 'FAIL'} "
        f"({sum(c.passed for c in report.checks)}/{len(report.checks)} checks, "
        f"{report.wall_clock_seconds:.1f}s)"
    )
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(report.to_json() + "\n")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
