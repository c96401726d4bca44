"""Command-line front end.

Exit codes:
    0  converged (or success for ``analyze``/``plot``)
    2  bad arguments or malformed input file
    3  horizon reached without convergence
    4  integration failure (order guard tripped at the minimum step)
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, io, svgplot
from .dynamics import HORIZON, IntegrationFailure, integrate
from .perturbation_lab import run_experiment

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_HORIZON = 3
EXIT_FAILURE = 4

log = logging.getLogger("topodyn")


def cmd_simulate(args) -> int:
    cfg = io.load_run_config(args.config, seed=args.seed, out=args.out)
    out = io.output_dir(args.out, cfg.out)
    try:
        traj = integrate(cfg.state, cfg.sim, radius=cfg.radius)
    except IntegrationFailure as exc:
        log.error("integration failed: %s", exc)
        if exc.trajectory is not None:
            io.write_trajectory(out / "trajectory.csv", exc.trajectory)
            io.write_events(out / "events.csv", exc.trajectory.events)
        io.write_json(out / "summary.json", {
            "schema_version": io.SCHEMA_VERSION,
            "status": "failed",
            "t_failure": exc.t,
            "message": str(exc),
        })
        return EXIT_FAILURE
    sc = analysis.classify_state(traj.final, cfg.eps, cfg.tol, radius=cfg.radius)
    if "trajectory" in cfg.outputs:
        io.write_trajectory(out / "trajectory.csv", traj)
    if "events" in cfg.outputs:
        io.write_events(out / "events.csv", traj.events)
    if "summary" in cfg.outputs:
        io.write_json(out / "summary.json", io.simulation_summary(cfg, traj, sc))
    if "plot" in cfg.outputs:
        svg = svgplot.render(traj.times, traj.values, [e.t for e in traj.events],
                             title=f"n={traj.n}, k={cfg.state.k}, {cfg.model}")
        (out / "trajectory.svg").write_text(svg)
    print(f"{traj.status} at t={traj.t_final:.6g}: {sc.kind}, cluster sizes {sc.partition.sizes}, "
          f"{len(traj.events)} switch events -> {out}")
    return EXIT_HORIZON if traj.status == HORIZON else EXIT_OK


def cmd_analyze(args) -> int:
    state = io.read_state(args.state, k=args.k)
    sc = analysis.classify_state(state, args.eps, args.tol)
    doc = io.analysis_summary(state, sc, args.eps, args.tol, source=args.state)
    if args.out:
        io.write_json(args.out, doc)
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def cmd_experiment(args) -> int:
    scenario, sim, outputs = io.load_scenario(args.scenario)
    out = io.output_dir(args.out)
    keep = "trajectory" in outputs
    try:
        report = run_experiment(scenario, sim, keep_trajectories=keep)
    except IntegrationFailure as exc:
        log.error("integration failed: %s", exc)
        return EXIT_FAILURE
    doc = io.report_doc(report, scenario)
    io.write_json(out / "report.json", doc)
    if keep:
        for r in report.runs:
            io.write_trajectory(out / f"trajectory_{r.model}.csv", r.trajectory)
            io.write_events(out / f"events_{r.model}.csv", r.trajectory.events)
    for r in report.runs:
        print(f"{r.model}: {r.status}, final {r.final.kind} {r.final.partition.sizes}, "
              f"partition_preserved={r.partition_preserved}, moved={r.original_agents_moved:.3g}")
    return EXIT_HORIZON if any(r.status == HORIZON for r in report.runs) else EXIT_OK


def cmd_plot(args) -> int:
    times, values = io.read_trajectory(args.trajectory)
    events = [t for t, _ in io.read_events(args.events)] if args.events else []
    try:
        svg = svgplot.render(times, values, events, title=args.title or "")
    except ValueError as exc:
        raise io.ConfigError(args.trajectory, str(exc)) from exc
    Path(args.out).write_text(svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="topodyn", description="k-nearest-neighbour opinion dynamics")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate one run from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, help="override init.random.seed")
    s.add_argument("--out", help=f"output directory (default: config 'out', ${io.OUT_ENV}, or .)")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="classify a state and report stability predicates")
    a.add_argument("--state", required=True, help="JSON state, or trajectory CSV together with --k")
    a.add_argument("--k", type=int)
    a.add_argument("--eps", type=float, default=0.0)
    a.add_argument("--tol", type=float, default=0.0)
    a.add_argument("--out", help="also write the summary here")
    a.set_defaults(func=cmd_analyze)

    e = sub.add_parser("experiment", help="run a perturbation scenario")
    e.add_argument("--scenario", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_experiment)

    g = sub.add_parser("plot", help="draw a trajectory CSV as SVG")
    g.add_argument("--trajectory", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--events", help="events CSV; switch times are marked on the time axis")
    g.add_argument("--title")
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except io.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
