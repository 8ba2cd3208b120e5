"""Command-line entry point: simulate, validate, metrics, calibrate, experiment."""

import argparse
import json
import logging
import sys
from pathlib import Path

from infoprop.config import settings

logger = logging.getLogger("infoprop.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _configure_logging(trace: bool = False) -> None:
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    if trace:
        logging.getLogger("infoprop.engine").setLevel(logging.DEBUG)


def cmd_simulate(args: argparse.Namespace) -> int:
    from infoprop.engine.simulator import run
    from infoprop.engine.zones import ExecutionMode, SimulationClock
    from infoprop.loaders.output_writer import write_output
    from infoprop.loaders.scenario_loader import load_scenario

    scenario = load_scenario(args.scenario, args.dt)
    mode = ExecutionMode(args.mode or settings.mode)
    clock = SimulationClock(scenario.t0, scenario.horizon, scenario.dt, mode)
    output = run(scenario, clock, workers=args.workers, time_space_dx=args.time_space)
    out_dir = Path(args.out or Path(settings.output_dir) / scenario.name)
    write_output(output, out_dir)
    s = output.summary
    print(
        f"{scenario.name}: {s.events} events, {s.node_updates} node updates, "
        f"{s.vehicles_exited:.3f} veh exited, output in {out_dir}"
    )
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    from infoprop.loaders.scenario_loader import load_scenario

    scenario = load_scenario(args.scenario, args.dt)
    print(
        f"{scenario.name}: valid ({len(scenario.links)} links, {len(scenario.nodes)} nodes, "
        f"{len(scenario.ods)} ODs, max step {scenario.max_step():.6g} h)"
    )
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    from infoprop.loaders.output_writer import load_output
    from infoprop.processors.metrics import metrics_table

    table = metrics_table(load_output(args.ref), load_output(args.sim), args.channel)
    print(table.to_string(float_format=lambda v: f"{v:.6f}", na_rep="n/a"))
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    from infoprop.calibration.iwls import calibrate
    from infoprop.calibration.problem import load_problem
    from infoprop.loaders.output_writer import load_output

    problem = load_problem(args.problem, load_output(args.reference))
    result = calibrate(problem)
    report = json.dumps(result.to_dict(), indent=2, sort_keys=True)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "calibration.json").write_text(report, encoding="utf-8")
        logger.info(f"Wrote calibration report to {out_dir}")
    print(report)
    return EXIT_OK if result.converged else EXIT_ERROR


def _experiment_specs(args: argparse.Namespace, scenario) -> list:
    from infoprop.calibration.experiments import (
        BLOCKED_LANE_LEVELS,
        PERTURBATION_LEVELS,
        SCALE_LEVELS,
        DemandPerturb,
        DemandScale,
        Incident,
        design_matrix,
    )

    repetitions = args.repetitions or settings.experiment.repetitions
    seed = settings.experiment.seed if args.seed is None else args.seed
    incident_link = args.incident_link or scenario.links[0].id
    start = scenario.t0 + (scenario.horizon - scenario.t0) / 3
    duration = (scenario.horizon - scenario.t0) / 3
    if args.kind == "design":
        return design_matrix(incident_link, start, duration, repetitions, seed)
    if args.kind == "scale":
        return [DemandScale(theta=v) for v in args.levels or SCALE_LEVELS]
    if args.kind == "perturb":
        return [
            DemandPerturb(alpha=v, repetitions=repetitions, seed=seed)
            for v in args.levels or PERTURBATION_LEVELS
        ]
    return [
        Incident(link=incident_link, blocked_lanes=int(v), start=start, duration=duration)
        for v in args.levels or BLOCKED_LANE_LEVELS
    ]


def cmd_experiment(args: argparse.Namespace) -> int:
    from infoprop.calibration.experiments import run_design
    from infoprop.engine.simulator import run
    from infoprop.loaders.output_writer import load_output, write_output
    from infoprop.loaders.scenario_loader import load_scenario, save_scenario

    base = load_scenario(args.scenario)
    out_dir = Path(args.out or Path(settings.output_dir) / f"{base.name}-experiments")

    if args.reference_dir:
        reference_dir = Path(args.reference_dir)

        def reference(scenario):
            return load_output(reference_dir / scenario.name)

    else:
        baseline = run(base)
        write_output(baseline, out_dir / "runs" / base.name)
        logger.info(f"No reference directory, comparing against the base run of {base.name}")

        def reference(scenario):
            return baseline

    def keep(scenario, output) -> None:
        save_scenario(scenario, out_dir / "scenarios" / f"{scenario.name}.json")
        write_output(output, out_dir / "runs" / scenario.name)

    tables = run_design(base, _experiment_specs(args, base), reference, args.workers, keep)
    for kind, table in tables.items():
        table.to_csv(out_dir / f"metrics_{kind}.csv")
        print(f"{kind}:\n{table.to_string(float_format=lambda v: f'{v:.6f}', na_rep='n/a')}")
    logger.info(f"Experiment runs written to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infoprop", description="Event-based network loading")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Run a scenario and write its outputs")
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", choices=["sequential", "distributed"])
    p.add_argument("--dt", type=float, help="Distributed step in hours")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--trace", action="store_true", help="Debug logging for the engines")
    p.add_argument("--time-space", type=float, metavar="DX_KM", dest="time_space")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="Load and cross-check a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--dt", type=float)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("metrics", help="Goodness of fit between two outputs")
    p.add_argument("--ref", required=True)
    p.add_argument("--sim", required=True)
    p.add_argument("--channel", choices=["counts", "times", "both"], default="both")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("calibrate", help="Fit parameters to a reference output")
    p.add_argument("--problem", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("experiment", help="Generate and run an experiment batch")
    p.add_argument("--scenario", required=True)
    p.add_argument("--kind", choices=["scale", "perturb", "incident", "design"], required=True)
    p.add_argument("--levels", type=float, nargs="+")
    p.add_argument("--seed", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--incident-link", dest="incident_link")
    p.add_argument("--reference-dir", dest="reference_dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    from infoprop.exceptions import InfopropError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    _configure_logging(getattr(args, "trace", False))
    try:
        return args.func(args)
    except (InfopropError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
