"""Command line: ``rtnep solve | sweep | cluster | verify``.

Monetary figures in result documents are in 10^3 EUR, rounded to 0.1.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import milp
from .formulation import Z_BINARY, Z_RELAXED, FormulationError, solve_operation
from .system import CaseParseError, CaseValidationError, bundled_case_path, load_case, validate_case
from .uncertainty import UncertaintyError

log = logging.getLogger("rtnep")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_SOLVER = 4
EXIT_NONCONVERGENCE = 5
EXIT_VERIFY = 6

# keys whose values change run to run; everything else is reproducible
TIMING_KEYS = ("wall_time_s", "seconds")


def _money(x):
    return None if x is None else round(float(x), 1)


def resolve_case_path(name):
    """A file path, or the name of a bundled case."""
    p = Path(name)
    if p.exists() or p.suffix:
        return p
    try:
        return bundled_case_path(name)
    except FileNotFoundError:
        return p


def open_case(args):
    case = load_case(resolve_case_path(args.case))
    budgets = {
        "budget_demand": args.gamma_d,
        "budget_conventional": args.gamma_g,
        "budget_wind": args.gamma_w,
    }
    budgets = {k: v for k, v in budgets.items() if v is not None}
    if budgets:
        case = case.with_uncertainty(**budgets)
    econ = {}
    if args.budget is not None:
        econ["investment_budget"] = args.budget
    if args.tol_outer is not None:
        econ["outer_tolerance"] = args.tol_outer
    if args.tol_inner is not None:
        econ["inner_tolerance"] = args.tol_inner
    if econ:
        case = case.with_economics(**econ)
    validate_case(case)
    return case


def solver_config(args):
    return milp.SolverConfig.from_env(time_limit=args.time_limit, mip_rel_gap=args.mip_gap, seed=args.seed)


def result_document(case, sol, relax_z=False, config=None):
    """Table-style summary of a robust solve."""
    sites = {s.id: f"bus-{s.bus}" for s in case.storage_units}
    storage = {sites[s.id]: int(sol.plan.storage_built.get(s.id, 0)) for s in case.candidate_storage}
    lines = {c.id: int(sol.plan.lines_built.get(c.id, 0)) for c in case.corridors if sol.plan.lines_built.get(c.id)}
    u = sol.worst_case_u
    doc = {
        "case": case.name,
        "budgets": {"demand": case.uncertainty.budget_demand, "conventional": case.uncertainty.budget_conventional,
                    "wind": case.uncertainty.budget_wind},
        "storage_modes": "relaxed" if relax_z else "binary",
        "lines_built": lines,
        "storage_built": storage,
        "capital_cost_kEUR": _money(sol.capital_cost),
        "total_annual_cost_kEUR": _money(sol.total_annual_cost),
        "lower_bound_kEUR": _money(sol.lower_bound * 1e3),
        "worst_case_u": {
            "demand": [d.id for d, f in zip(case.demands, u.u_demand) if f],
            "conventional": [g.id for g, f in zip(case.conventional, u.u_conv) if f],
            "wind": [g.id for g, f in zip(case.wind, u.u_wind) if f],
        },
        "outer_iterations": sol.log.outer_count,
        "inner_iterations": sol.log.inner_counts,
        "converged": bool(sol.converged),
        "summary": [f"new lines built on corridor {k}: {v}" for k, v in lines.items()]
        + [f"new storage units built at candidate site {k}: {v}" for k, v in storage.items()],
        "wall_time_s": round(sol.wall_time, 3),
    }
    if relax_z:
        op = solve_operation(case, sol.plan, u, z_mode=Z_RELAXED, config=config)
        doc["simultaneous_hours"] = int(op.simultaneous().sum())
    return doc


def _flat_row(doc):
    row = {
        "case": doc["case"],
        "gamma_d": doc["budgets"]["demand"],
        "gamma_g": doc["budgets"]["conventional"],
        "gamma_w": doc["budgets"]["wind"],
        "lines_built": ";".join(f"{k}x{v}" for k, v in doc["lines_built"].items()),
        "storage_built": ";".join(f"{k}x{v}" for k, v in doc["storage_built"].items() if v),
        "capital_cost_kEUR": doc["capital_cost_kEUR"],
        "total_annual_cost_kEUR": doc["total_annual_cost_kEUR"],
        "worst_case_u": ";".join(sum(doc["worst_case_u"].values(), [])),
        "outer_iterations": doc["outer_iterations"],
        "inner_iterations": ";".join(str(n) for n in doc["inner_iterations"]),
        "converged": doc["converged"],
        "wall_time_s": doc["wall_time_s"],
    }
    if "simultaneous_hours" in doc:
        row["simultaneous_hours"] = doc["simultaneous_hours"]
    return row


def _csv_text(rows):
    if not rows:
        return ""
    buf = io.StringIO()
    fields = list(rows[0])
    for r in rows[1:]:
        fields += [k for k in r if k not in fields]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in r.items()})
    return buf.getvalue()


def emit(text, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _figure_path(args, suffix):
    base = Path(args.out) if args.out else Path(f"rtnep_{args.command}")
    return base.with_name(f"{base.stem}_{suffix}.png")


# ---------------------------------------------------------------------------


def cmd_solve(args):
    from .nested_ccg import solve_robust_tnep

    case = open_case(args)
    config = solver_config(args)
    z_mode = Z_RELAXED if args.relax_z else Z_BINARY
    sol = solve_robust_tnep(case, config, z_mode=z_mode, max_outer=args.max_outer)
    doc = result_document(case, sol, args.relax_z, config)
    if args.format == "json":
        doc["iterations"] = [
            {k: v for k, v in r.items() if k != "time"} for r in sol.log.records()
        ]
        emit(json.dumps(doc, indent=1) + "\n", args.out)
    else:
        emit(_csv_text([_flat_row(doc)]), args.out)
        if args.out:
            side = Path(args.out).with_suffix(".iterations.csv")
            side.write_text(_csv_text(sol.log.records()))
    if args.plot:
        from .plotting import plot_convergence

        path = plot_convergence(sol.log, _figure_path(args, "convergence"), title=case.name)
        log.info("wrote %s", path)
    return EXIT_OK if sol.converged else EXIT_NONCONVERGENCE


def parse_budget_triplet(text):
    try:
        d, g, w = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"budgets must look like D,G,W, got {text!r}") from None
    return d, g, w


def parse_k_values(items):
    out = []
    for it in items:
        if "-" in it:
            a, b = it.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(it))
    return out


def _sweep_budget_point(case, triplet, config, z_mode):
    import time

    from .nested_ccg import solve_robust_tnep

    t0 = time.perf_counter()
    row = {"budgets": "{},{},{}".format(*triplet)}
    try:
        c = case.with_uncertainty(budget_demand=triplet[0], budget_conventional=triplet[1], budget_wind=triplet[2])
        validate_case(c)
        sol = solve_robust_tnep(c, config, z_mode=z_mode)
        row.update(capital_cost=sol.capital_cost, total_annual_cost=sol.total_annual_cost,
                   outer_iterations=sol.log.outer_count, error=None)
    except Exception as exc:  # recorded in-row, the sweep goes on
        row.update(capital_cost=None, total_annual_cost=None, outer_iterations=None, error=str(exc))
    row["wall_time"] = time.perf_counter() - t0
    return row


def _sweep_k_point(case, series, k, seed, config, z_mode):
    from .clustering import stability_sweep

    return stability_sweep(case, series, [k], seed=seed, config=config, z_mode=z_mode)[0]


def cmd_sweep(args):
    case = open_case(args)
    config = solver_config(args)
    z_mode = Z_RELAXED if args.relax_z else Z_BINARY
    if bool(args.budgets) == bool(args.k):
        raise argparse.ArgumentTypeError("give exactly one of --budgets or --k")
    if args.budgets:
        axis, jobs = "budgets", [(_sweep_budget_point, (case, b, config, z_mode)) for b in args.budgets]
    else:
        from .clustering import HourlySeries

        series_path = args.series or Path(bundled_case_path("garver")).with_name("garver_history.csv")
        series = HourlySeries.from_csv(series_path, wind_signals=tuple(g.profile for g in case.wind))
        axis = "K"
        jobs = [(_sweep_k_point, (case, series, k, args.seed, config, z_mode)) for k in parse_k_values(args.k)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_call, jobs))
    else:
        rows = [_call(j) for j in jobs]
    table = [
        {
            axis: r[axis],
            "capital_cost_kEUR": _money(r["capital_cost"]),
            "total_annual_cost_kEUR": _money(r["total_annual_cost"]),
            "outer_iterations": r["outer_iterations"],
            "wall_time_s": round(r["wall_time"], 3),
            "error": r["error"] or "",
        }
        for r in rows
    ]
    if args.format == "json":
        emit(json.dumps(table, indent=1) + "\n", args.out)
    else:
        emit(_csv_text(table), args.out)
    if args.plot:
        from .plotting import plot_sweep

        plot_sweep(rows, axis, _figure_path(args, "sweep"))
    return EXIT_OK if all(not r["error"] for r in rows) else EXIT_SOLVER


def _call(job):
    fn, a = job
    return fn(*a)


def cmd_cluster(args):
    from .clustering import HourlySeries, build_representative_days

    try:
        series = HourlySeries.from_csv(args.series, wind_signals=tuple(args.wind))
    except CaseParseError:
        raise
    except ValueError as exc:
        raise CaseValidationError(str(exc)) from exc
    days = build_representative_days(series, args.k, args.seed)
    section = [
        {
            "weight": d.weight,
            "demand_factor": {k: list(v) for k, v in d.demand_factor.items()},
            "wind_cf": {k: list(v) for k, v in d.wind_cf.items()},
        }
        for d in days
    ]
    if args.format == "json":
        emit(json.dumps({"representative_days": section}, indent=1) + "\n", args.out)
    else:
        rows = []
        for i, d in enumerate(days):
            sigs = {**d.demand_factor, **d.wind_cf}
            for h in range(len(next(iter(sigs.values())))):
                rows.append({"day": f"rd{i + 1:02d}", "hour": h + 1, "weight": d.weight,
                             **{k: v[h] for k, v in sigs.items()}})
        emit(_csv_text(rows), args.out)
    if args.plot:
        from .plotting import plot_days

        plot_days(days, _figure_path(args, "days"))
    return EXIT_OK


def cmd_verify(args):
    from .oracle import SUITES, run_verify

    selected = SUITES if args.instances == "all" else [args.instances]
    config = solver_config(args)
    rows, ok = [], True
    for sel in selected:
        rep = run_verify(sel, config, tol=args.tolerance)
        for r in rep.as_dicts():
            rows.append({"suite": sel, **r})
        ok &= rep.passed
    if args.format == "json":
        emit(json.dumps({"passed": ok, "rows": rows}, indent=1) + "\n", args.out)
    else:
        emit(_csv_text(rows), args.out)
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", default="garver", help="case file, or a bundled case name (default: garver)")
    common.add_argument("--gamma-d", type=int, help="demand uncertainty budget")
    common.add_argument("--gamma-g", type=int, help="conventional-unit uncertainty budget")
    common.add_argument("--gamma-w", type=int, help="wind-unit uncertainty budget")
    common.add_argument("--budget", type=float, help="investment budget, 10^3 EUR")
    common.add_argument("--tol-outer", type=float, help="outer-loop tolerance (default from case, 1e-6)")
    common.add_argument("--tol-inner", type=float, help="inner-loop tolerance (default from case, 1e-6)")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--time-limit", type=float, help="per-solve time limit, seconds")
    solver.add_argument("--mip-gap", type=float, help="relative MIP gap")
    solver.add_argument("--seed", type=int, default=0)
    solver.add_argument("--out", help="output file (default: stdout)")
    solver.add_argument("--format", choices=("json", "csv"), help="default: from --out suffix, else json (csv for sweep)")
    solver.add_argument("--plot", action="store_true", help="also write PNG figures next to --out")
    solver.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="rtnep", description="Robust transmission and storage expansion planning.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common, solver], help="solve one robust expansion problem")
    s.add_argument("--relax-z", action="store_true", help="drop the storage mode binaries (diagnostic)")
    s.add_argument("--max-outer", type=int, default=50)
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", parents=[common, solver], help="solve along a budget or K axis")
    w.add_argument("--budgets", nargs="+", type=parse_budget_triplet, metavar="D,G,W")
    w.add_argument("--k", nargs="+", metavar="K", help="numbers of representative days, e.g. 3-12")
    w.add_argument("--series", help="hourly history CSV for the K axis (default: bundled synthetic year)")
    w.add_argument("--relax-z", action="store_true")
    w.add_argument("--jobs", type=int, default=1, help="concurrent sweep points")
    w.set_defaults(func=cmd_sweep, default_format="csv")

    c = sub.add_parser("cluster", parents=[solver], help="representative days from an hourly CSV")
    c.add_argument("--series", required=True, help="CSV with day,hour,<signals>")
    c.add_argument("-k", type=int, required=True)
    c.add_argument("--wind", nargs="*", default=["wind"], help="columns holding wind capacity factors")
    c.set_defaults(func=cmd_cluster)

    v = sub.add_parser("verify", parents=[solver], help="compare against the brute-force oracle")
    v.add_argument("--instances", default="toy", help="toy, toy3, garver-reduced, garver-zero, relaxed-demo or all")
    v.add_argument("--tolerance", type=float, default=1e-6)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        suffix = Path(args.out).suffix.lstrip(".").lower() if args.out else ""
        args.format = suffix if suffix in ("json", "csv") else getattr(args, "default_format", "json")
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    from .nested_ccg import MasterInfeasibleError, NonConvergenceError

    try:
        return args.func(args)
    except CaseParseError as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except (CaseValidationError, UncertaintyError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_VALIDATION
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except NonConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_NONCONVERGENCE
    except (milp.SolverError, FormulationError, MasterInfeasibleError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
