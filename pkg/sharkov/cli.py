#!/usr/bin/env python3
"""
Command-line front end for the sharkov toolkit.
Usage:
  sharkov order compare 3 5
  sharkov detect periods sharkov/maps/tent.map --p 3
  sharkov pipeline run --config sharkov/pipeline_config.json --scenario "Tent period 3 to 5" --summary
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, List, Optional

import pandas as pd

from sharkov import continuity, hyper_core, orbit_analysis, perturbation, pl_map, sharkovskii_order, theorem_pipeline
from sharkov.config import configure_logging, default_seed
from sharkov.errors import (
    ConfigError,
    DisplacementTooLargeError,
    DomainError,
    DomainMismatchError,
    InvalidArgumentError,
    InvarianceError,
    NoDataError,
    NoReturnError,
    NoShadowError,
    NoWitnessError,
    ScheduleUnderflowError,
)
from sharkov.textio import format_real, parse_real_list

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FALSE = 1
EXIT_USAGE = 2
EXIT_UNDETERMINED = 3
EXIT_INVARIANCE = 4
EXIT_REJECTED = 5
EXIT_INTERNAL = 70
EXIT_INTERRUPTED = 130


def _emit_json(data: Any) -> None:
    print(json.dumps(data, indent=2))


def _emit_table(frame: pd.DataFrame) -> None:
    print(frame.to_string(index=False))


def _read_hyper(token: str) -> hyper_core.HyperNumber:
    """A hypernumber given inline or as a path to a file holding one."""
    path = Path(token)
    if path.is_file():
        return hyper_core.parse_hyper(path.read_text(encoding="utf-8").strip())
    return hyper_core.parse_hyper(token)


def _load_map(path: str) -> pl_map.PiecewiseLinearMap:
    if not Path(path).is_file():
        raise ConfigError(f"Map file not found: {path}")
    return pl_map.load_map(path)


def _tri_state_exit(value: str) -> int:
    if value in ("holds", "less", "yes"):
        return EXIT_PASS
    if value in ("fails", "not-less", "no"):
        return EXIT_FALSE
    return EXIT_UNDETERMINED


def cmd_order(args: argparse.Namespace) -> int:
    if args.order_command == "compare":
        verdict = sharkovskii_order.compare(args.p, args.q)
        if verdict is sharkovskii_order.OrderVerdict.EQUAL:
            print("equal")
        elif verdict is sharkovskii_order.OrderVerdict.BEFORE:
            print(f"{args.p} ◁ {args.q}")
        else:
            print(f"{args.q} ◁ {args.p}")
        return EXIT_PASS

    if args.order_command == "forced":
        forced = sharkovskii_order.forced_periods(args.p, args.bound, order_by_sharkovskii=args.sharkovskii)
        if args.json:
            _emit_json({"p": args.p, "bound": args.bound, "forced": forced})
        else:
            print(" ".join(str(q) for q in forced))
        return EXIT_PASS

    if args.order_command == "chain":
        print(" ◁ ".join(str(n) for n in sharkovskii_order.chain(args.max)))
        return EXIT_PASS

    verdict = sharkovskii_order.star_compare(_read_hyper(args.r), _read_hyper(args.s))
    print(verdict.value)
    return _tri_state_exit(verdict.value)


def cmd_hyper(args: argparse.Namespace) -> int:
    x = _read_hyper(args.x)
    if args.hyper_command in ("add", "mul", "sub"):
        y = _read_hyper(args.y)
        op = {"add": hyper_core.add, "mul": hyper_core.mul, "sub": hyper_core.subtract}[args.hyper_command]
        print(hyper_core.format_hyper(op(x, y).canonical()))
        return EXIT_PASS

    if args.hyper_command == "order":
        result = hyper_core.order(x, _read_hyper(args.y), strict=not args.non_strict)
        print(result.value)
        return _tri_state_exit(result.value)

    if args.hyper_command == "classify":
        print(hyper_core.classify(x).value)
        return EXIT_PASS

    if args.hyper_command == "shadow":
        print(format_real(hyper_core.shadow(x)))
        return EXIT_PASS

    truth = hyper_core.infinitely_close(x, _read_hyper(args.y))
    print(truth.value)
    return _tri_state_exit(truth.value)


def cmd_map(args: argparse.Namespace) -> int:
    f = _load_map(args.map)
    if args.map_command == "eval":
        print(format_real(f.evaluate(args.x)))
        return EXIT_PASS

    if args.map_command == "iterate":
        print(format_real(pl_map.iterate(f, args.k, args.x)))
        return EXIT_PASS

    if args.map_command == "norm-dist":
        print(format_real(pl_map.sup_distance(f, _load_map(args.other))))
        return EXIT_PASS

    frame = orbit_analysis.orbit_frame(f, args.x, args.steps)
    if args.csv:
        frame.to_csv(args.csv, index=False)
        logger.info(f"Orbit series saved to {args.csv}")
    else:
        print(frame.to_csv(index=False), end="")
    return EXIT_PASS


def cmd_detect(args: argparse.Namespace) -> int:
    f = _load_map(args.map)
    if args.detect_command == "periods":
        orbits = orbit_analysis.find_periodic_points(f, args.p, args.grid)
        if args.json:
            _emit_json([o.to_dict() for o in orbits])
        else:
            _emit_table(pd.DataFrame([o.to_dict() for o in orbits], columns=["point", "period", "orbit", "residual", "mode"]))
        return EXIT_PASS if orbits else EXIT_FALSE

    if args.detect_command == "first-return":
        window = pl_map.Interval.around(args.x0, args.radius)
        R = orbit_analysis.first_return(f, window, args.max_time)
        if args.json:
            _emit_json({"x0": args.x0, "radius": args.radius, "first_return": R})
        else:
            print(R if R is not None else "none")
        return EXIT_PASS if R is not None else EXIT_FALSE

    if args.detect_command == "forcing":
        report = orbit_analysis.verify_forcing(f, args.p, args.bound)
        if args.json:
            _emit_json(report.to_dict())
        else:
            _emit_table(report.to_frame())
        return EXIT_PASS if report.complete else EXIT_FALSE

    radii = parse_real_list(args.radii)
    if args.detect_command == "profile":
        profile = orbit_analysis.return_profile(f, args.x0, radii, args.max_time)
        if args.json:
            _emit_json(profile.to_dict())
        else:
            _emit_table(profile.to_frame())
        return EXIT_PASS

    result = orbit_analysis.classify_point(f, args.x0, radii, args.max_time)
    if args.json:
        _emit_json(result.to_dict())
    else:
        print(result.kind.value + (f" {result.period}" if result.period else ""))
    return EXIT_PASS


def cmd_perturb(args: argparse.Namespace) -> int:
    f = _load_map(args.map)
    witness = perturbation.find_witness(f, args.x0, args.delta, args.max_time)
    plan = perturbation.plan_from_witness(f, args.x0, args.delta, witness, index_n=args.index)
    certificate = perturbation.certify(plan, f)
    document = {"plan": plan.to_dict(), "certificate": certificate.to_dict()}
    if args.output:
        Path(args.output).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
        logger.info(f"Plan saved to {args.output}")
        print("pass" if certificate.passed else "fail")
    else:
        _emit_json(document)
    return EXIT_PASS if certificate.passed else EXIT_FALSE


def cmd_verify(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    results = continuity.stability_harness(args.trials, seed, max_S=args.max_s, max_n=args.max_n)
    frame = pd.DataFrame([r.to_dict() for r in results]).drop(columns=["norms"])
    violations = int((frame["status"] == "fail").sum())
    if args.json:
        _emit_json({"trials": args.trials, "seed": seed, "violations": violations, "results": [r.to_dict() for r in results]})
    else:
        print(frame["status"].value_counts().to_string())
        print(f"violations: {violations}")
    return EXIT_PASS if violations == 0 else EXIT_FALSE


def _pipeline_overrides(args: argparse.Namespace) -> dict:
    return {
        "x0": args.x0,
        "epsilon": args.epsilon,
        "depth": args.depth,
        "max_time": args.max_time,
        "grid": args.grid,
    }


def cmd_pipeline(args: argparse.Namespace) -> int:
    if args.list_scenarios:
        raw = theorem_pipeline.read_config_file(args.config)
        names = theorem_pipeline.scenario_names(raw)
        for i, name in enumerate(names, 1):
            print(f"{i}. {name}")
        if not names:
            print("(no named scenarios; the file is a single configuration)")
        return EXIT_PASS

    overrides = _pipeline_overrides(args)
    if args.all:
        configs = theorem_pipeline.load_all_configs(args.config, overrides)
        reports = theorem_pipeline.run_scenarios(configs, args.output or "pipeline_reports")
        _emit_table(pd.DataFrame([{"scenario": r.name, "status": r.status} for r in reports], columns=["scenario", "status"]))
        if len(reports) < len(configs):
            return EXIT_REJECTED
        return EXIT_PASS if all(r.passed for r in reports) else EXIT_REJECTED

    config = theorem_pipeline.load_config(args.config, scenario=args.scenario, overrides=overrides)
    report = theorem_pipeline.run(config)
    output = args.output or config.output
    if output:
        theorem_pipeline.save_report(report, output)

    if args.summary:
        _emit_table(theorem_pipeline.stages_frame(report.to_dict(include_timestamp=False)))
        print(f"status: {report.status}")
        if report.x1 is not None:
            print(f"x1: {format_real(report.x1)}")
    elif not output:
        print(report.to_json())

    if report.passed:
        return EXIT_PASS
    print(report.status, file=sys.stderr)
    return EXIT_REJECTED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sharkov",
        description="Sharkovskii order, hyperreal fragment arithmetic and interval-map return certificates",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Compare two periods in Sharkovskii's order
  sharkov order compare 3 5

  # Periods forced by a period-3 orbit
  sharkov order forced 3 --bound 10

  # Period-3 orbits of the tent map
  sharkov detect periods sharkov/maps/tent.map --p 3

  # Run one pipeline scenario and print the stage table
  sharkov pipeline run --config sharkov/pipeline_config.json --scenario "Tent period 3 to 5" --summary

  # Run every scenario, one report per scenario plus an index
  sharkov pipeline run --config sharkov/pipeline_config.json --all --output reports/

Exit codes: 0 pass, 1 verdict false, 2 usage/config error, 3 ultrafilter-dependent,
4 invariance error, 5 pipeline stage rejection, 70 internal error.
        """,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO logs, -vv for DEBUG")
    commands = parser.add_subparsers(dest="command", required=True)

    order = commands.add_parser("order", help="Sharkovskii order queries")
    order_sub = order.add_subparsers(dest="order_command", required=True)
    p = order_sub.add_parser("compare", help="Compare P and Q")
    p.add_argument("p", type=int)
    p.add_argument("q", type=int)
    p = order_sub.add_parser("forced", help="Periods forced by P up to a bound")
    p.add_argument("p", type=int)
    p.add_argument("--bound", type=int, required=True)
    p.add_argument("--sharkovskii", action="store_true", help="List in Sharkovskii order instead of numerically")
    p.add_argument("--json", action="store_true")
    p = order_sub.add_parser("chain", help="1..M listed in Sharkovskii order")
    p.add_argument("--max", type=int, required=True)
    p = order_sub.add_parser("star-compare", help="Lifted order on hypernaturals (files or inline text)")
    p.add_argument("r")
    p.add_argument("s")

    hyper = commands.add_parser("hyper", help="Hypernumber arithmetic and classification")
    hyper_sub = hyper.add_subparsers(dest="hyper_command", required=True)
    for name in ("add", "mul", "sub", "order", "close"):
        p = hyper_sub.add_parser(name)
        p.add_argument("x")
        p.add_argument("y")
        if name == "order":
            p.add_argument("--non-strict", action="store_true", help="Test x <= y instead of x < y")
    for name in ("classify", "shadow"):
        p = hyper_sub.add_parser(name)
        p.add_argument("x")

    maps = commands.add_parser("map", help="Piecewise-linear map evaluation")
    map_sub = maps.add_subparsers(dest="map_command", required=True)
    p = map_sub.add_parser("eval")
    p.add_argument("map")
    p.add_argument("--x", type=float, required=True)
    p = map_sub.add_parser("iterate")
    p.add_argument("map")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p = map_sub.add_parser("norm-dist")
    p.add_argument("map")
    p.add_argument("other")
    p = map_sub.add_parser("orbit", help="Orbit series as CSV")
    p.add_argument("map")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--csv", help="Write the series to this file instead of stdout")

    detect = commands.add_parser("detect", help="Periodic orbits, returns and point classification")
    detect_sub = detect.add_subparsers(dest="detect_command", required=True)
    p = detect_sub.add_parser("periods")
    p.add_argument("map")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--grid", type=int)
    p.add_argument("--json", action="store_true")
    p = detect_sub.add_parser("first-return")
    p.add_argument("map")
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--max-time", type=int, default=50)
    p.add_argument("--json", action="store_true")
    p = detect_sub.add_parser("forcing")
    p.add_argument("map")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--bound", type=int, required=True)
    p.add_argument("--json", action="store_true")
    for name in ("profile", "classify"):
        p = detect_sub.add_parser(name)
        p.add_argument("map")
        p.add_argument("--x0", type=float, required=True)
        p.add_argument("--radii", required=True, help="Comma-separated radii")
        p.add_argument("--max-time", type=int, default=50)
        p.add_argument("--json", action="store_true")

    perturb = commands.add_parser("perturb", help="Bump perturbation plans")
    perturb_sub = perturb.add_subparsers(dest="perturb_command", required=True)
    p = perturb_sub.add_parser("build")
    p.add_argument("map")
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--max-time", type=int, default=50)
    p.add_argument("--index", type=int, default=1)
    p.add_argument("--output", help="Write the plan JSON here")

    verify = commands.add_parser("verify", help="Randomized verification harnesses")
    verify_sub = verify.add_subparsers(dest="verify_command", required=True)
    p = verify_sub.add_parser("lemma1")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, help="Default: SHARKOV_SEED or 0")
    p.add_argument("--max-s", type=int, default=8)
    p.add_argument("--max-n", type=int, default=50)
    p.add_argument("--json", action="store_true")

    pipeline = commands.add_parser("pipeline", help="Run the finite-depth construction")
    pipeline_sub = pipeline.add_subparsers(dest="pipeline_command", required=True)
    p = pipeline_sub.add_parser("run")
    p.add_argument("--config", required=True, help="JSON or TOML configuration file")
    p.add_argument("--scenario", help="Name of a scenario from the config")
    p.add_argument("--all", action="store_true", help="Run all scenarios from the config")
    p.add_argument("--list-scenarios", action="store_true", help="List available scenarios and exit")
    p.add_argument("--summary", action="store_true", help="Print the stage table")
    p.add_argument("--output", help="Report path (a directory with --all)")
    p.add_argument("--x0", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--max-time", type=int)
    p.add_argument("--grid", type=int)

    return parser


HANDLERS = {
    "order": cmd_order,
    "hyper": cmd_hyper,
    "map": cmd_map,
    "detect": cmd_detect,
    "perturb": cmd_perturb,
    "verify": cmd_verify,
    "pipeline": cmd_pipeline,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.verbose)
    try:
        return HANDLERS[args.command](args)
    except (ConfigError, InvalidArgumentError, DomainMismatchError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InvarianceError as e:
        where = f" (point {e.point!r}, step {e.index})" if e.point is not None else ""
        print(f"invariance error: {e}{where}", file=sys.stderr)
        return EXIT_INVARIANCE
    except DomainError as e:
        print(f"domain error: {e}", file=sys.stderr)
        return EXIT_INVARIANCE
    except (NoShadowError, NoReturnError, NoWitnessError, DisplacementTooLargeError, NoDataError, ScheduleUnderflowError) as e:
        print(f"{e}", file=sys.stderr)
        return EXIT_FALSE
    except KeyboardInterrupt:
        logger.warning("Interrupted by user")
        return EXIT_INTERRUPTED
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
