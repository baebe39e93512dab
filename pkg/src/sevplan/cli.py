"""Command-line interface.

    plan run <scenario-file> --out DIR [--epsilon V] [--intervals N]
                                       [--setting 1|2] [--trace]
    plan builtin <scenario1|scenario2|scenario2-cond2> --out DIR [...]
    plan compare <dirA> <dirB>

Exit codes: 0 converged, 1 input error, 2 solver diagnostics (the run
finished but a level did not converge; artifacts are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .errors import GridMismatchError, ScenarioFormatError, ScenarioValidationError
from .ocp import SolveOptions
from .scenario import BUILTIN_NAMES, load_builtin, parse_scenario
from .runner import compare, run


def _add_solve_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output directory for run artifacts")
    p.add_argument("--epsilon", type=float, default=None,
                   help="severity budget slack (default: 1e-3 * (1 + J1*))")
    p.add_argument("--intervals", type=int, default=None,
                   help="override the number of control intervals")
    p.add_argument("--setting", choices=("1", "2"), default=None,
                   help="rating setting override")
    p.add_argument("--trace", action="store_true",
                   help="write per-iteration solver trace CSV into the output directory")


def _apply_overrides(scenario, args):
    if args.epsilon is not None:
        if args.epsilon < 0:
            raise ScenarioValidationError("--epsilon must be >= 0")
        scenario = dataclasses.replace(scenario, epsilon=args.epsilon)
    if args.intervals is not None:
        if args.intervals < 2:
            raise ScenarioValidationError("--intervals must be >= 2")
        scenario = dataclasses.replace(scenario, num_intervals=args.intervals)
    if args.setting is not None:
        scenario = scenario.with_setting(args.setting)
    return scenario


def _run_and_report(scenario, args) -> int:
    options = SolveOptions()
    if args.trace:
        os.makedirs(args.out, exist_ok=True)
        options = dataclasses.replace(
            options, trace_csv=os.path.join(args.out, "solver_trace.csv")
        )
    artifacts = run(scenario, args.out, options)
    print(json.dumps(artifacts.summary, indent=2))
    if not artifacts.summary["converged"]:
        print("warning: a solver level did not converge; see summary", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plan",
        description="Plan minimum-collision-severity vehicle trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve a scenario file")
    p_run.add_argument("scenario_file", help="path to a scenario JSON document")
    _add_solve_args(p_run)

    p_builtin = sub.add_parser("builtin", help="solve a built-in scenario")
    p_builtin.add_argument("name", choices=BUILTIN_NAMES)
    _add_solve_args(p_builtin)

    p_cmp = sub.add_parser("compare", help="compare two run directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            try:
                with open(args.scenario_file) as fh:
                    text = fh.read()
            except OSError as exc:
                print(f"error: cannot read {args.scenario_file}: {exc}", file=sys.stderr)
                return 1
            scenario = _apply_overrides(parse_scenario(text), args)
            return _run_and_report(scenario, args)
        if args.command == "builtin":
            scenario = _apply_overrides(load_builtin(args.name), args)
            return _run_and_report(scenario, args)
        result = compare(args.dir_a, args.dir_b)
        print(json.dumps(result, indent=2))
        return 0
    except (ScenarioFormatError, ScenarioValidationError, GridMismatchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
