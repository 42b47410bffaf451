"""Command line entry point: ``rcms run|batch|bench|export-field|validate``.

Scenario arguments accept a file path or the name of a bundled scenario
(``scenario1``, ``scenario2``, ``scenario3``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .planner import control_penalty, shift_warm_start, solve
from .risk_field import FieldAgent, write_field_csv
from .scenario import (ScenarioError, apply_overrides, bundled_scenario_path, parse_scenario,
                       resolved_config)
from .sim import PlannerSelection, RunOptions, run, write_trace
from .world import visible_agents

EXIT_OK = 0
EXIT_COLLISION = 1
EXIT_INVALID = 2


def _resolve_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    try:
        return bundled_scenario_path(name)
    except FileNotFoundError:
        raise ScenarioError([f"scenario {name!r}: no such file or bundled scenario"]) from None


def _load(name: str, overrides: Sequence[str]):
    """Returns (spec, data after overrides, stored resolved-config fields or {})."""
    path = _resolve_path(name)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    stored = {}
    if isinstance(data, dict) and "scenario" in data and "sources" in data:
        stored = {"planner": data.get("planner"), "sources": data["sources"]}
        data = data["scenario"]
    if overrides:
        data = apply_overrides(data, list(overrides))
    return parse_scenario(data), data, stored


def _out_dir(arg: Optional[str]) -> Path:
    out = Path(arg or os.environ.get("RCMS_OUT_DIR") or "rcms-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _run_one(name: str, overrides: Sequence[str], planner: Optional[str], out: Path,
             timing: bool) -> dict:
    spec, data, stored = _load(name, overrides)
    selection = PlannerSelection(planner or stored.get("planner") or PlannerSelection.SWITCHED.value)
    record = run(spec, selection, RunOptions(record_timing=timing))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.csv", "w", encoding="utf-8", newline="") as fh:
        write_trace(record, fh)
    _dump_json(record.summary, out / "summary.json")
    cfg = resolved_config(spec, data, list(overrides))
    if stored:
        # re-running a resolved config keeps the original provenance tags
        keys = {o.split("=", 1)[0].strip() for o in overrides}
        cfg["sources"] = {k: "override" if k in keys else v for k, v in stored["sources"].items()}
    cfg["planner"] = selection.value
    _dump_json(cfg, out / "resolved-config.json")
    return record.summary


def cmd_run(args) -> int:
    summary = _run_one(args.scenario, args.set, args.planner, _out_dir(args.out), args.timing)
    _report_summary(summary)
    if args.fail_on_collision and summary["collision"]:
        return EXIT_COLLISION
    return EXIT_OK


def _report_summary(summary: dict) -> None:
    hit = (f"collision {summary['collision_pair']} at t={summary['collision_time']}"
           if summary["collision"] else "no collision")
    print(f"{summary['scenario']} [{summary['planner']}]: {hit}; "
          f"activations {summary['activations']}, deactivations {summary['deactivations']}")


def _batch_job(job):
    name, overrides, planner, out, timing = job
    return name, planner, _run_one(name, overrides, planner, Path(out), timing)


def cmd_batch(args) -> int:
    out = _out_dir(args.out)
    planners = args.planner or [None]
    jobs = []
    for name in args.scenario:
        stem = _resolve_path(name).stem
        for planner in planners:
            sub = out / (stem if planner is None else f"{stem}-{planner}")
            jobs.append((name, list(args.set), planner, str(sub), args.timing))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_batch_job, jobs))
    else:
        results = [_batch_job(j) for j in jobs]
    rows = []
    for _, _, summary in results:
        _report_summary(summary)
        rows.append(summary)
    _dump_json(rows, out / "batch-summary.json")
    if args.fail_on_collision and any(s["collision"] for s in rows):
        return EXIT_COLLISION
    return EXIT_OK


def bench_solves(spec, repeat: int) -> dict:
    """Re-solve every RCMS tick of a closed-loop run ``repeat`` times."""
    requests = []

    def hook(t, ego, seen, risk, planner):
        warm = shift_warm_start(planner.previous) if planner.previous is not None else None
        requests.append((t, ego, list(seen), control_penalty(risk, planner.cfg, planner.hys), warm))

    run(spec, PlannerSelection.SWITCHED, RunOptions(rcms_hook=hook))
    cfg = replace(spec.planner, time_budget=None)
    bike = spec.bicycle()
    times = []
    for _ in range(repeat):
        for _, ego, seen, r, warm in requests:
            t0 = time.perf_counter()
            solve(ego, seen, spec.road, bike, spec.field, cfg, r, warm)
            times.append((time.perf_counter() - t0) * 1e3)
    report = {
        "scenario": spec.name,
        "horizon": spec.planner.horizon,
        "sample_time": spec.planner.sample_time,
        "ticks": len(requests),
        "repeat": repeat,
        "solves": len(times),
    }
    if times:
        report.update({
            "mean_ms": statistics.fmean(times),
            "median_ms": statistics.median(times),
            "p99_ms": float(np.percentile(times, 99)),
            "max_ms": max(times),
        })
    return report


def cmd_bench(args) -> int:
    spec, _, _ = _load(args.scenario, args.set)
    report = bench_solves(spec, args.repeat)
    print(f"H={report['horizon']} Ts={report['sample_time']} ticks={report['ticks']} "
          f"repeat={report['repeat']}")
    if report["solves"]:
        print(f"mean {report['mean_ms']:.2f} ms  median {report['median_ms']:.2f} ms  "
              f"p99 {report['p99_ms']:.2f} ms  max {report['max_ms']:.2f} ms")
    else:
        print("no activated ticks")
    if args.out:
        _dump_json(report, _out_dir(args.out) / "bench.json")
    return EXIT_OK


def cmd_export_field(args) -> int:
    spec, _, _ = _load(args.scenario, args.set)
    record = run(spec, PlannerSelection(args.planner or "switched"))
    t = args.time
    if t is None:
        t = record.summary["activations"][0] if record.summary["activations"] else spec.t_start
    row = min(record.rows, key=lambda r: abs(r.t - t))
    seen = visible_agents(row.ego, row.agents, spec.fov)
    agents = [FieldAgent.build(o.position, o.heading, o.speed, o.length, o.width, spec.field,
                               o.class_scale) for o in seen]
    road = spec.road
    s0 = float(np.dot(np.array([row.ego.x, row.ego.y]) - np.asarray(road.origin), road.tangent))
    n = int(round((args.behind + args.ahead) / args.step)) + 1
    m = int(round((road.lateral_max - road.lateral_min) / args.step)) + 1
    ss = np.linspace(s0 - args.behind, s0 + args.ahead, n)
    ds = np.linspace(road.lateral_min, road.lateral_max, m)
    # grid axes are in the road frame; the road heading in bundled scenarios is 0
    if abs(road.road_heading) > 1e-12:
        raise SystemExit("export-field supports axis-aligned roads only")
    xs = road.origin[0] + ss
    ys = road.origin[1] + ds
    out = _out_dir(args.out)
    path = out / "field.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        rows = write_field_csv(fh, xs, ys, agents, road, spec.field)
    print(f"wrote {rows} samples at t={row.t} to {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    status = EXIT_OK
    for name in args.scenario:
        try:
            _load(name, args.set)
        except ScenarioError as exc:
            print(f"{name}: invalid", file=sys.stderr)
            for p in exc.problems:
                print(f"  {p}", file=sys.stderr)
            status = EXIT_INVALID
        except (OSError, json.JSONDecodeError) as exc:
            print(f"{name}: {exc}", file=sys.stderr)
            status = EXIT_INVALID
        else:
            print(f"{name}: ok")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcms", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log planner warnings")
    sub = parser.add_subparsers(dest="command", required=True)
    planners = [p.value for p in PlannerSelection]

    def common(p, many=False):
        if many:
            p.add_argument("--scenario", action="append", required=True, metavar="PATH",
                           help="scenario file or bundled name (repeatable)")
        else:
            p.add_argument("--scenario", required=True, metavar="PATH",
                           help="scenario file or bundled name")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a setting, e.g. planner.max_iter=80 (repeatable)")

    p = sub.add_parser("run", help="simulate one scenario")
    common(p)
    p.add_argument("--out", metavar="DIR", help="output directory (default $RCMS_OUT_DIR)")
    p.add_argument("--planner", choices=planners)
    p.add_argument("--fail-on-collision", action="store_true")
    p.add_argument("--timing", action="store_true", help="record solve times in the trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="simulate several scenarios")
    common(p, many=True)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--planner", action="append", choices=planners,
                   help="planner selection (repeatable; each scenario runs once per selection)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--fail-on-collision", action="store_true")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("bench", help="time the RCMS solver on a scenario's activated ticks")
    common(p)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--out", metavar="DIR", help="also write bench.json here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-field", help="sample the risk field around the ego to CSV")
    common(p)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--planner", choices=planners)
    p.add_argument("--time", type=float, help="snapshot time (default: first activation)")
    p.add_argument("--step", type=float, default=0.5, help="grid spacing in metres")
    p.add_argument("--ahead", type=float, default=60.0)
    p.add_argument("--behind", type=float, default=30.0)
    p.set_defaults(func=cmd_export_field)

    p = sub.add_parser("validate", help="check scenario files")
    common(p, many=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "repeat", 1) < 1:
        print("--repeat must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
