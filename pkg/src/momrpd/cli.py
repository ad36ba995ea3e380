"""Command-line entry point: ``momrpd {run,front,sensitivity,validate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from .experiment import ExperimentSpec, SpecError, cmd_front, cmd_run, cmd_sensitivity, validate_scenario
from .scenario import ScenarioError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _load_spec(args) -> ExperimentSpec:
    spec = ExperimentSpec.load(args.spec) if args.spec else ExperimentSpec()
    if getattr(args, "seed_override", None) is not None:
        spec.seeds = [args.seed_override]
    return spec


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="momrpd", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run methods x budgets x seeds and write reports")
    run.add_argument("--spec", required=True)
    run.add_argument("--out")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--seed-override", type=int)

    front = sub.add_parser("front", help="emit sample clouds and mean/ellipse tables")
    front.add_argument("--spec")
    front.add_argument("--method", default="AS")
    front.add_argument("--K", type=int)
    front.add_argument("--out")
    front.add_argument("--seed-override", type=int)

    sens = sub.add_parser("sensitivity", help="mean h-test over eta x eta_test")
    sens.add_argument("--spec", required=True)
    sens.add_argument("--K", type=int)
    sens.add_argument("--out")
    sens.add_argument("--seed-override", type=int)

    val = sub.add_parser("validate", help="lint scenario files")
    val.add_argument("scenarios", nargs="+")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            for path in args.scenarios:
                print(validate_scenario(path))
            return EXIT_OK
        spec = _load_spec(args)
        if args.command == "run":
            print(cmd_run(spec, args.out, args.jobs))
        elif args.command == "front":
            print(cmd_front(spec, args.method, args.K or spec.K[0], spec.seeds[0], args.out))
        elif args.command == "sensitivity":
            print(cmd_sensitivity(spec, args.K, args.out))
    except (SpecError, ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - report and exit with the runtime code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
