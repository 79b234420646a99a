"""Brute-force ground truth: vertex enumeration and the extensive form.

Both are exact for the finite uncertainty set and scale with its vertex
count, so they are capped and meant for toy or reduced instances.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field

from . import milp
from .formulation import Z_BINARY, Z_RELAXED, annualized_investment, build_master, solve_operation
from .nested_ccg import IterationLog, RobustSolution, solve_robust_tnep
from .system import load_bundled, plan_capital_cost
from .uncertainty import count_vertices, enumerate_vertices

log = logging.getLogger(__name__)

DEFAULT_VERTEX_CAP = 4096


class VertexCapError(ValueError):
    pass


def _check_cap(case, cap):
    n = count_vertices(case.uncertainty, case)
    if n > cap:
        raise VertexCapError(f"{n} uncertainty vertices exceed the cap of {cap}")
    return n


def brute_force_worst_case(case, plan, cap=DEFAULT_VERTEX_CAP, config=None, z_mode=Z_BINARY):
    """Maximum recourse cost (MEUR) over every vertex, and the attaining u.

    Ties go to the lexicographically smallest deviation vector.
    """
    _check_cap(case, cap)
    best, arg = None, None
    for u in sorted(enumerate_vertices(case.uncertainty, case), key=lambda v: v.flat):
        cost = solve_operation(case, plan, u, z_mode=z_mode, config=config).cost
        if best is None or cost > best + 1e-9 * max(1.0, abs(best)):
            best, arg = cost, u
    return best, arg


def extensive_form(case, cap=DEFAULT_VERTEX_CAP, config=None, z_mode=Z_BINARY):
    """Global optimum of the robust problem as one MILP over all vertices."""
    _check_cap(case, cap)
    start = time.perf_counter()
    vertices = enumerate_vertices(case.uncertainty, case)
    master = build_master(case, vertices, z_mode=z_mode)
    res = milp.solve(master.builder, config or milp.SolverConfig())
    if res.status == milp.INFEASIBLE:
        raise milp.SolverError("extensive form infeasible")
    if not res.optimal:
        raise milp.SolverError(f"extensive form: solver status {res.status}")
    plan = master.plan_vars.read(res.values).nonzero()
    # worst vertex under the optimal plan, read from the scenario copies
    costs = [(sc.block.cost(res.values), sc.u) for sc in master.scenarios]
    worst = max(costs, key=lambda t: t[0])[1]
    return RobustSolution(
        plan=plan,
        worst_case_u=worst,
        total_annual_cost=res.objective * 1e3,
        capital_cost=plan_capital_cost(plan, case),
        log=IterationLog(),
        lower_bound=res.objective,
        upper_bound=res.objective,
        converged=True,
        wall_time=time.perf_counter() - start,
    )


def robust_cost_of_plan(case, plan, cap=DEFAULT_VERTEX_CAP, config=None):
    """Annualized investment plus brute-force worst-case operation, in MEUR."""
    wc, u = brute_force_worst_case(case, plan, cap, config)
    return annualized_investment(case, plan) + wc, u


def budget_grid(case):
    """Every budget combination of the case's uncertainty groups."""
    sizes = (len(case.demands), len(case.conventional), len(case.wind))
    return list(itertools.product(*(range(n + 1) for n in sizes)))


def relaxed_demo_case():
    return load_bundled("relaxed_demo")


@dataclass
class VerifyRow:
    instance: str
    budgets: tuple
    algorithm: float | None  # MEUR
    oracle: float | None
    delta: float | None
    simultaneous_hours: int = 0
    relaxed: float | None = None
    error: str | None = None
    seconds: float = 0.0
    solution: RobustSolution | None = field(default=None, repr=False, compare=False)

    def ok(self, tol):
        return self.error is None and self.delta is not None and self.delta <= tol


@dataclass
class VerifyReport:
    rows: list = field(default_factory=list)
    tolerance: float = 1e-6

    @property
    def passed(self):
        return all(r.ok(self.tolerance) for r in self.rows)

    def as_dicts(self):
        return [
            {
                "instance": r.instance,
                "budgets": list(r.budgets),
                "algorithm_kEUR": None if r.algorithm is None else round(r.algorithm * 1e3, 6),
                "oracle_kEUR": None if r.oracle is None else round(r.oracle * 1e3, 6),
                "delta_MEUR": r.delta,
                "relaxed_kEUR": None if r.relaxed is None else round(r.relaxed * 1e3, 6),
                "simultaneous_hours": r.simultaneous_hours,
                "ok": r.ok(self.tolerance),
                "error": r.error,
                "seconds": round(r.seconds, 3),
            }
            for r in self.rows
        ]


def compare(case, label, config=None, cap=DEFAULT_VERTEX_CAP, tol=1e-6):
    """Nested C&CG against the extensive form on one case."""
    t0 = time.perf_counter()
    budgets = case.uncertainty.budgets
    try:
        alg = solve_robust_tnep(case, config)
        ref = extensive_form(case, cap, config)
    except (milp.SolverError, VertexCapError, RuntimeError, ValueError) as exc:
        return VerifyRow(label, budgets, None, None, None, error=str(exc), seconds=time.perf_counter() - t0)
    row = VerifyRow(label, budgets, alg.objective, ref.upper_bound, abs(alg.objective - ref.upper_bound),
                    solution=alg)
    row.seconds = time.perf_counter() - t0
    return row


def relaxed_comparison(case, label="relaxed-z-demo", config=None):
    """Binary versus relaxed storage modes; counts simultaneous hours in the relaxed solution."""
    t0 = time.perf_counter()
    binary = solve_robust_tnep(case, config)
    relaxed = solve_robust_tnep(case, config, z_mode=Z_RELAXED)
    op = solve_operation(case, relaxed.plan, relaxed.worst_case_u, z_mode=Z_RELAXED, config=config)
    ref = extensive_form(case, config=config)
    return VerifyRow(
        label,
        case.uncertainty.budgets,
        binary.objective,
        ref.upper_bound,
        abs(binary.objective - ref.upper_bound),
        simultaneous_hours=int(op.simultaneous().sum()),
        relaxed=relaxed.objective,
        seconds=time.perf_counter() - t0,
        solution=binary,
    )


def reduce_case(case, days=2, hours=4):
    """Keep the first ``days`` representative days truncated to ``hours`` hours, reweighted to 365."""
    from .system import RepresentativeDay

    picked = case.representative_days[:days]
    w = 365.0 / len(picked)
    new = [
        RepresentativeDay(
            weight=w,
            demand_factor={k: tuple(v[:hours]) for k, v in d.demand_factor.items()},
            wind_cf={k: tuple(v[:hours]) for k, v in d.wind_cf.items()},
        )
        for d in picked
    ]
    return case.with_days(new)


SUITES = ("toy", "toy3", "garver-reduced", "garver-zero", "relaxed-demo")


def suite_cases(selector):
    """``(label, case)`` pairs of an oracle suite, one per budget combination."""
    if selector == "garver-zero":
        case = load_bundled("garver").with_uncertainty(budget_demand=0, budget_conventional=0, budget_wind=0)
        return [("garver", case)]
    base = {
        "toy": lambda: load_bundled("toy_2bus"),
        "toy3": lambda: load_bundled("toy_3bus"),
        "garver-reduced": lambda: reduce_case(load_bundled("garver")),
    }.get(selector)
    if base is None:
        raise ValueError(f"unknown instance suite {selector!r}; choose from {', '.join(SUITES)}")
    case = base()
    grid = GARVER_REDUCED_BUDGETS if selector == "garver-reduced" else budget_grid(case)
    variants = [(case.name, case)]
    if selector == "toy":
        # the two-bus grid has only four budget combinations; widen it with other demand deviations
        for dev in TOY_EXTRA_DEVIATIONS:
            variants.append((f"{case.name}@dev{dev:g}", case.with_uncertainty(demand_deviation=dev)))
    return [
        (label, c.with_uncertainty(budget_demand=g[0], budget_conventional=g[1], budget_wind=g[2]))
        for label, c in variants
        for g in grid
    ]


def run_verify(selector="toy", config=None, tol=1e-6, max_combos=None):
    """Comparison report for a bundled instance suite."""
    report = VerifyReport(tolerance=tol)
    if selector == "relaxed-demo":
        report.rows.append(relaxed_comparison(relaxed_demo_case(), config=config))
        return report
    jobs = suite_cases(selector)
    if max_combos:
        jobs = jobs[:max_combos]
    for label, c in jobs:
        report.rows.append(compare(c, label, config, tol=tol))
    return report


TOY_EXTRA_DEVIATIONS = (0.1, 0.3)

# a spread of budget levels whose vertex sets keep the extensive form small (at most 48 vertices;
# (2, 1, 1) has 128 and its extensive form runs for several minutes)
GARVER_REDUCED_BUDGETS = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (0, 1, 1), (1, 0, 1), (1, 1, 1),
                          (2, 0, 1)]


__all__ = [
    "brute_force_worst_case",
    "extensive_form",
    "robust_cost_of_plan",
    "run_verify",
    "suite_cases",
    "reduce_case",
    "VerifyReport",
    "VertexCapError",
]
