"""Command-line front end for the constraint-set and pooling experiments.

Subcommands emit machine-readable CSV/JSON only; plotting stays external.
Every randomized command requires an explicit ``--seed``. Exit codes:
0 success, 2 invalid input, 3 solve budget or iteration cap exhausted.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import statistics
import sys
import time

from . import admm, agents, ingest, model
from .errors import BudgetExceeded, MaxIterExceeded, PoolError, ValidationError
from .geometry import DEFAULT_RADIUS, build_circle_family
from .ingest import ExperimentSpec, SyntheticSpec


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_trace(path, report: admm.SolveReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "objective", "primal_res_fsp", "primal_res_circles", "integer_round", "feasible"])
        for row in report.trace_rows():
            writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3]), row[4], row[5]])


def _solution_report(scenario, solution, mode, extra=None) -> dict:
    payload = {
        "mode": mode,
        "objective": solution.objective,
        "p_F": solution.p_F,
        "p": solution.p.tolist(),
        "z": solution.z.tolist(),
        "feasibility": [
            {"kind": v.kind, "where": list(v.where), "amount": v.amount}
            for v in model.check_feasible(scenario, solution)
        ],
        "scenario_digest": scenario.digest(),
    }
    if extra:
        payload.update(extra)
    return payload


def cmd_circles(args) -> int:
    points = ingest.load_points(args.points)
    family = build_circle_family(points, args.radius)
    sizes = [len(cs.members) for cs in family.sets]
    over = sum(1 for s in sizes if s > args.circle_cap)
    print(f"n_sets={len(family.sets)} max_members={max(sizes)} over_cap={over}")
    if args.out:
        _write_json(args.out, family.to_json_dict())
    return 0


def cmd_capacity(args) -> int:
    spec = ExperimentSpec.from_json_file(args.spec)
    spec.seed = args.seed
    points = spec.resolve_points()
    family = build_circle_family(points, spec.radius)
    rows = []
    for rate in spec.participation_rates:
        result = model.monte_carlo_usable_fraction(
            points,
            rate,
            spec.trials,
            spec.seed,
            power_cap=spec.power_cap,
            circle_cap=spec.circle_cap,
            radius=spec.radius,
            family=family,
        )
        for trial in range(spec.trials):
            rows.append((rate, str(trial), result.fractions[trial], result.capacities_kw[trial]))
        rows.append((rate, "mean", result.mean_fraction, result.mean_capacity_kw))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rate", "trial", "usable_fraction", "total_kw"])
        for rate, trial, frac, kw in rows:
            writer.writerow([rate, trial, repr(float(frac)), repr(float(kw))])
    _write_json(args.out + ".meta.json", {"spec": spec.to_dict(), "n_points": len(points)})
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _admm_params(args) -> admm.AdmmParams:
    return admm.AdmmParams(
        rho_c=args.rho_c,
        rho_f=args.rho_f,
        k_ip=args.k_ip,
        alpha=args.alpha,
        max_iter=args.max_iter,
        warm_start=not args.no_warm_start,
    )


def cmd_solve(args) -> int:
    scenario = ingest.load_scenario(args.scenario)
    t0 = time.perf_counter()
    if args.mode == "exact":
        try:
            solution = model.solve_exact(scenario, gap_tol=args.gap_tol, node_limit=args.node_limit)
        except BudgetExceeded as exc:
            print(f"budget exceeded: {exc}", file=sys.stderr)
            if args.out:
                payload = {
                    "mode": "exact",
                    "status": "budget_exceeded",
                    "lower_bound": exc.lower_bound,
                    "nodes": exc.nodes,
                    "objective": exc.best.objective if exc.best else None,
                }
                _write_json(args.out, payload)
            return 3
        report = _solution_report(
            scenario, solution, "exact", {"wall_time_s": time.perf_counter() - t0}
        )
        if args.out:
            _write_json(args.out, report)
        print(f"objective={solution.objective} p_F={solution.p_F}")
        return 0

    params = _admm_params(args)
    msg_log = open(args.msg_log, "w") if (args.msg_log and args.mode == "agents") else None
    try:
        if args.mode == "admm":
            solve_report = admm.run(scenario, params)
            stats = None
        else:
            solve_report, stats = agents.run_simulation(scenario, params, msg_log=msg_log)
    except MaxIterExceeded as exc:
        print(f"iteration cap exceeded: {exc}", file=sys.stderr)
        if args.out and exc.report is not None and exc.report.solution is not None:
            payload = _solution_report(scenario, exc.report.solution, args.mode)
            payload.update({"status": "max_iter", "iterations": exc.report.iterations})
            _write_json(args.out, payload)
        if args.trace and exc.report is not None:
            _write_trace(args.trace, exc.report)
        return 3
    finally:
        if msg_log:
            msg_log.close()

    extra = {
        "status": solve_report.status,
        "iterations": solve_report.iterations,
        "wall_time_s": solve_report.wall_time_s,
        "params": params.to_json_dict(),
    }
    if stats is not None:
        extra["round_stats"] = [
            {
                "k": rs.iteration,
                "messages": rs.messages_sent,
                "bytes": rs.bytes_estimate,
                "max_fanout": rs.max_fanout,
            }
            for rs in stats
        ]
    if args.exact_ref:
        with open(args.exact_ref) as fh:
            ref = json.load(fh)
        ref_obj = ref["objective"]
        gap = (solve_report.solution.objective - ref_obj) / abs(ref_obj) if ref_obj else 0.0
        extra["gap_vs_ref"] = gap
        print(f"gap vs reference: {gap:.4%}")
    report = _solution_report(scenario, solve_report.solution, args.mode, extra)
    if args.out:
        _write_json(args.out, report)
    if args.trace:
        _write_trace(args.trace, solve_report)
    print(
        f"status={solve_report.status} iterations={solve_report.iterations} "
        f"objective={solve_report.solution.objective} p_F={solve_report.solution.p_F}"
    )
    return 0


def sweep_rho(
    spec: ExperimentSpec,
    rate: float,
    rho_values,
    n_seeds: int,
    rho_f: float,
    k_ip: int = 10,
    alpha: float = 0.005,
    max_iter: int = 1000,
):
    """Per-(rho_c, seed) iteration counts and optimality gaps.

    Builds one scenario per seed from the experiment spec, solves it exactly
    once, then runs the consensus solver for every penalty value. A run that
    hits the iteration cap reports the cap and the gap of the best schedule
    its report carries.
    """
    rows = []
    for seed_idx in range(n_seeds):
        scenario = ingest.build_scenario(spec, rate, seed_idx)
        exact = model.solve_exact(scenario)
        for rho in rho_values:
            params = admm.AdmmParams(
                rho_c=rho, rho_f=rho_f, k_ip=k_ip, alpha=alpha, max_iter=max_iter
            )
            try:
                report = admm.run(scenario, params)
            except MaxIterExceeded as exc:
                report = exc.report
            gap = (
                (report.solution.objective - exact.objective) / abs(exact.objective)
                if exact.objective
                else 0.0
            )
            rows.append(
                {"rho_c": rho, "seed": seed_idx, "iterations": report.iterations, "gap": gap}
            )
    return rows


def cmd_sweep(args) -> int:
    spec = ExperimentSpec.from_json_file(args.spec)
    spec.seed = args.seed
    rate = args.rate if args.rate is not None else spec.participation_rates[0]
    rho_values = [float(v) for v in args.rho_c.split(",")]
    rows = sweep_rho(
        spec, rate, rho_values, args.seeds, args.rho_f,
        k_ip=args.k_ip, alpha=args.alpha, max_iter=args.max_iter,
    )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho_c", "seed", "iterations", "gap"])
        for row in rows:
            writer.writerow([row["rho_c"], row["seed"], row["iterations"], repr(row["gap"])])
        for rho in rho_values:
            sub = [r for r in rows if r["rho_c"] == rho]
            writer.writerow(
                [rho, "mean", statistics.mean(r["iterations"] for r in sub), repr(statistics.mean(r["gap"] for r in sub))]
            )
    _write_json(args.out + ".meta.json", {"spec": spec.to_dict(), "rate": rate, "rho_values": rho_values})
    print(f"wrote sweep of {len(rho_values)} rho values x {args.seeds} seeds to {args.out}")
    return 0


def bench_scenario(size: int, n_t: int, seed: int):
    """Clustered benchmark instance with ``size`` assets."""
    spec = ExperimentSpec(
        synthetic=SyntheticSpec(
            kind="clustered_gaussian",
            n_points=size,
            extent=max(300.0, 120.0 * math.sqrt(size)),
            density_param=35.0,
            seed=seed,
        ),
        participation_rates=[1.0],
        trials=1,
        n_T=n_t,
        seed=seed,
    )
    return ingest.build_scenario(spec, 1.0, 0)


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    params = _admm_params(args)
    rows = []
    for size in sizes:
        scenario = bench_scenario(size, args.n_t, args.seed)
        run_exact = args.exact_cutoff is None or size <= args.exact_cutoff
        t_exact = []
        exact_obj = None
        if run_exact:
            for _ in range(args.reps):
                t0 = time.perf_counter()
                sol = model.solve_exact(scenario, node_limit=args.node_limit)
                t_exact.append((time.perf_counter() - t0) * 1000.0)
                exact_obj = sol.objective
        t_admm = []
        admm_obj = None
        for _ in range(args.reps):
            t0 = time.perf_counter()
            report = admm.run(scenario, params)
            t_admm.append((time.perf_counter() - t0) * 1000.0)
            admm_obj = report.solution.objective
        rows.append(
            {
                "n_assets": size,
                "t_exact_ms": statistics.median(t_exact) if t_exact else None,
                "t_admm_ms": statistics.median(t_admm),
                "exact_objective": exact_obj,
                "admm_objective": admm_obj,
            }
        )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_assets", "t_exact_ms", "t_admm_ms"])
        for row in rows:
            writer.writerow(
                [
                    row["n_assets"],
                    "" if row["t_exact_ms"] is None else repr(row["t_exact_ms"]),
                    repr(row["t_admm_ms"]),
                ]
            )
    _write_json(
        args.out + ".meta.json",
        {
            "sizes": sizes,
            "n_t": args.n_t,
            "seed": args.seed,
            "objectives": [
                {"n_assets": r["n_assets"], "exact": r["exact_objective"], "admm": r["admm_objective"]}
                for r in rows
            ],
        },
    )
    timed = [r for r in rows if r["t_exact_ms"] is not None]
    if len(timed) >= 2:
        ratios = [r["t_exact_ms"] / r["t_admm_ms"] for r in timed]
        print("exact/admm time ratios:", " ".join(f"{x:.2f}" for x in ratios))
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcrpool", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_circles = sub.add_parser("circles", help="build the constraint-set family from a points CSV")
    p_circles.add_argument("--points", required=True)
    p_circles.add_argument("--radius", type=float, default=DEFAULT_RADIUS)
    p_circles.add_argument("--circle-cap", type=int, default=model.DEFAULT_CIRCLE_CAP)
    p_circles.add_argument("--out")
    p_circles.set_defaults(func=cmd_circles)

    p_cap = sub.add_parser("capacity", help="usable-capacity Monte Carlo per participation rate")
    p_cap.add_argument("--spec", required=True, help="experiment spec JSON")
    p_cap.add_argument("--seed", type=int, required=True)
    p_cap.add_argument("--out", required=True)
    p_cap.set_defaults(func=cmd_capacity)

    p_solve = sub.add_parser("solve", help="solve one scenario exactly or with the consensus solver")
    p_solve.add_argument("--scenario", required=True, help="scenario JSON")
    p_solve.add_argument("--mode", choices=["exact", "admm", "agents"], required=True)
    p_solve.add_argument("--out")
    p_solve.add_argument("--trace", help="iteration trace CSV (admm/agents)")
    p_solve.add_argument("--msg-log", help="NDJSON message log (agents)")
    p_solve.add_argument("--exact-ref", help="reference report JSON for gap printing")
    p_solve.add_argument("--gap-tol", type=float, default=1e-9)
    p_solve.add_argument("--node-limit", type=int, default=200_000)
    _add_admm_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="penalty-weight sweep: iterations vs optimality gap")
    p_sweep.add_argument("--spec", required=True, help="experiment spec JSON (scenario template)")
    p_sweep.add_argument("--rho-c", required=True, help="comma-separated penalty values")
    p_sweep.add_argument("--seeds", type=int, required=True, help="number of seeded scenarios")
    p_sweep.add_argument("--seed", type=int, required=True)
    p_sweep.add_argument("--rate", type=float, help="participation rate (default: first in spec)")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--rho-f", type=float, default=0.25)
    p_sweep.add_argument("--k-ip", type=int, default=10)
    p_sweep.add_argument("--alpha", type=float, default=0.005)
    p_sweep.add_argument("--max-iter", type=int, default=1000)
    p_sweep.set_defaults(func=cmd_sweep)

    p_bench = sub.add_parser("bench", help="runtime scaling: exact solver vs consensus solver")
    p_bench.add_argument("--sizes", required=True, help="comma-separated asset counts")
    p_bench.add_argument("--seed", type=int, required=True)
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--n-t", type=int, default=4)
    p_bench.add_argument("--reps", type=int, default=3)
    p_bench.add_argument("--exact-cutoff", type=int)
    p_bench.add_argument("--node-limit", type=int, default=200_000)
    _add_admm_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def _add_admm_flags(p) -> None:
    p.add_argument("--rho-c", type=float, default=0.3)
    p.add_argument("--rho-f", type=float, default=0.25)
    p.add_argument("--k-ip", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.005)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--no-warm-start", action="store_true")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BudgetExceeded, MaxIterExceeded) as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PoolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
