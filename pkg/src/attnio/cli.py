"""Command line front end: ``attnio {run,sweep,verify,demo-exp,gen,classify}``.

Exit codes: 0 success, 2 usage, 3 planning error, 4 simulation error,
5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .attention import approx_attention, exact_attention, exp_via_attention, poly_error_budget
from .core import gen_problem, write_matrix
from .errors import EntriesTooLargeError, PlanningError, SimulationError
from .iosim import dump_trace, replay_check, simulate
from .planner import (
    KINDS,
    Params,
    analytic_cost,
    best_kind,
    case2_threshold,
    choose_w,
    classify_case,
    cost_report,
    plan_geometry,
)
from .polyapprox import choose_degree
from .schedules import build_schedule

EXIT_OK, EXIT_USAGE, EXIT_PLANNING, EXIT_SIMULATION, EXIT_VERIFY = 0, 2, 3, 4, 5

SWEEP_HEADER = [
    "n", "d", "g", "M", "r", "schedule", "case",
    "loads", "stores", "total_io", "analytic", "lower_bound", "replay_ok",
]
MAX_SWEEP_ROWS = 10_000


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _kind_list(text: str) -> list[str]:
    kinds = [x.strip() for x in text.split(",") if x.strip()]
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown schedule(s): {', '.join(bad)}")
    return kinds


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def default_degree(d: int, B: float, vmax: float, eps: float) -> int:
    """Smallest certified even degree for scores bounded by sqrt(d) B^2."""
    budget = min(poly_error_budget(eps, np.array([vmax])), 0.5)
    return choose_degree(budget, math.sqrt(d) * B * B)


def run_one(kind: str, p: Params, problem=None, replay: bool = True, trace_out=None) -> dict:
    """Plan, simulate and optionally replay one schedule; return a flat report."""
    sched = build_schedule(kind, p)
    stats = simulate(sched.ops(), p.M, sched.registry)
    report = json.loads(cost_report(kind, sched.params).to_json())
    report.update(stats.as_dict())
    report["analytic"] = analytic_cost(kind, sched.params, sched.geometry)
    report["replay_ok"] = replay_check(sched.ops(), problem, sched.meta) if replay else None
    if trace_out is not None:
        with open(trace_out, "w") as fh:
            dump_trace(sched.ops(), fh)
    return report


def cmd_run(args) -> int:
    g = args.g if args.g is not None else default_degree(args.d, args.B, args.vmax, args.eps)
    p = Params(args.n, args.d, g, args.M, args.w)
    kind = best_kind(p) if args.schedule == "auto" else args.schedule
    problem = gen_problem(args.n, args.d, args.B, args.vmax, args.seed) if args.n else None
    report = run_one(kind, p, problem, trace_out=args.trace_out)
    report.update(n=p.n, d=p.d, g=p.g, M=p.M)
    _emit(report)
    return EXIT_OK if report["replay_ok"] else EXIT_VERIFY


def _sweep_row(task) -> list | None:
    n, d, g, M, kind, B, vmax, seed, replay = task
    p = Params(n, d, g, M)
    try:
        plan_geometry(kind, p)
    except PlanningError:
        return None
    problem = gen_problem(n, d, B, vmax, seed) if (replay and n) else None
    rep = run_one(kind, p, problem, replay=replay)
    ok = "" if rep["replay_ok"] is None else str(rep["replay_ok"]).lower()
    return [n, d, g, M, p.r, kind, rep["case"], rep["loads"], rep["stores"],
            rep["total_io"], rep["analytic"], repr(rep["lower_bound"]), ok]


def sweep_rows(ns, ds, gs, Ms, kinds, B=0.5, vmax=1.0, seed=0, replay=True, workers=1) -> list[list]:
    """Rows in grid-major order (n, d, g, M, schedule); inapplicable pairs are skipped."""
    tasks = [(n, d, g, M, k, B, vmax, seed, replay) for n in ns for d in ds for g in gs for M in Ms for k in kinds]
    if len(tasks) > MAX_SWEEP_ROWS:
        raise ValueError(f"sweep has {len(tasks)} combinations, limit is {MAX_SWEEP_ROWS}")
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    return [r for r in rows if r is not None]


def sweep_workers() -> int:
    cap = os.environ.get("ATTNIO_THREADS")
    n = os.cpu_count() or 1
    return max(1, min(n, int(cap))) if cap else n


def cmd_sweep(args) -> int:
    rows = sweep_rows(args.n, args.d, args.g, args.M, args.schedules, args.B, args.vmax,
                      args.seed, replay=not args.no_replay, workers=sweep_workers())
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        w.writerows(rows)
    bad = [r for r in rows if r[-1] == "false"]
    return EXIT_VERIFY if bad else EXIT_OK


def cmd_verify(args) -> int:
    prob = gen_problem(args.n, args.d, args.B, args.vmax, args.seed)
    approx = approx_attention(prob.Q, prob.K, prob.V, args.eps)
    exact = exact_attention(prob.Q, prob.K, prob.V)
    dev = float(np.abs(approx.output - exact.output).max(initial=0.0))
    ok = dev <= args.eps
    _emit({"max_abs_dev": dev, "eps": args.eps, "degree": approx.degree, "pass": ok})
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_demo_exp(args) -> int:
    z = exp_via_attention(args.x)
    _emit({"x": args.x, "z": z, "deviation": abs(z - math.exp(args.x))})
    return EXIT_OK


def cmd_gen(args) -> int:
    prob = gen_problem(args.n, args.d, args.B, args.vmax, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in "QKV":
        write_matrix(out / f"{name}.txt", getattr(prob, name))
    _emit({"n": args.n, "d": args.d, "seed": args.seed, "dir": str(out)})
    return EXIT_OK


def cmd_classify(args) -> int:
    case = classify_case(args.d, args.g, args.M)
    p = Params(0, args.d, args.g, args.M)
    info = {"case": case.value, "r": p.r, "d_r": args.d * p.r, "case2_threshold": case2_threshold(args.g)}
    try:
        info["w"] = choose_w(args.g, args.M, args.d)
    except PlanningError:
        info["w"] = None
    _emit(info)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="attnio", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def problem_flags(sp, need_n=True):
        sp.add_argument("--n", type=int, required=need_n)
        sp.add_argument("--d", type=int, required=True)
        sp.add_argument("--B", type=float, default=0.5)
        sp.add_argument("--vmax", type=float, default=1.0)
        sp.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", help="simulate one schedule and print a JSON report")
    problem_flags(run)
    run.add_argument("--M", type=int, required=True)
    run.add_argument("--g", type=int, default=None, help="degree; derived from --eps when omitted")
    run.add_argument("--eps", type=float, default=1e-2)
    run.add_argument("--w", type=int, default=None, help="generating-set size for keylemma")
    run.add_argument("--schedule", choices=("auto",) + KINDS, default="auto")
    run.add_argument("--trace-out", default=None)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="grid of runs written as CSV")
    sw.add_argument("--n", type=_int_list, required=True)
    sw.add_argument("--d", type=_int_list, required=True)
    sw.add_argument("--g", type=_int_list, required=True)
    sw.add_argument("--M", type=_int_list, required=True)
    sw.add_argument("--schedules", type=_kind_list, default=list(KINDS))
    sw.add_argument("--B", type=float, default=0.5)
    sw.add_argument("--vmax", type=float, default=1.0)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--no-replay", action="store_true")
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", help="approximate vs exact attention on a seeded instance")
    problem_flags(ver)
    ver.add_argument("--eps", type=float, default=1e-2)
    ver.set_defaults(func=cmd_verify)

    de = sub.add_parser("demo-exp", help="recover exp(x) from one attention call")
    de.add_argument("--x", type=float, required=True)
    de.set_defaults(func=cmd_demo_exp)

    gen = sub.add_parser("gen", help="write seeded Q, K, V matrices")
    problem_flags(gen)
    gen.add_argument("--out-dir", required=True)
    gen.set_defaults(func=cmd_gen)

    cl = sub.add_parser("classify", help="regime and generating-set size for (d, g, M)")
    cl.add_argument("--d", type=int, required=True)
    cl.add_argument("--g", type=int, required=True)
    cl.add_argument("--M", type=int, required=True)
    cl.set_defaults(func=cmd_classify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PlanningError, EntriesTooLargeError) as exc:
        print(f"planning error: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except OverflowError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
