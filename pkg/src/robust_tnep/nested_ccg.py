"""Nested column-and-constraint generation for the robust expansion problem.

The outer loop alternates the master (investment plus one operation copy per
identified scenario) with a max-min subproblem. Because storage modes are
binary recourse, the max-min is itself solved by an inner loop: a recourse
MILP at fixed ``(plan, u)`` yields a mode pattern, and a dualized MILP over
``u`` and the duals of every pattern seen so far proposes the next ``u``.

Bounds are in MEUR, like every model objective.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import milp
from .formulation import (
    Z_BINARY,
    Z_RELAXED,
    FormulationError,
    InnerMaster,
    annualized_investment,
    build_master,
    dual_variable_bound,
    solve_model,
    solve_operation,
)
from .system import ExpansionPlan, plan_capital_cost
from .uncertainty import DeviationVector

log = logging.getLogger(__name__)


class RobustSolveError(RuntimeError):
    pass


class MasterInfeasibleError(RobustSolveError):
    def __init__(self, message, scenario=None):
        super().__init__(message)
        self.scenario = scenario


class NonConvergenceError(RobustSolveError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class InnerIteration:
    index: int
    u: DeviationVector
    cost: float
    z: np.ndarray | None
    lb: float
    ub: float
    xi: float | None
    time: float


@dataclass
class InnerLog:
    iterations: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False

    @property
    def lb(self):
        return self.iterations[-1].lb if self.iterations else -math.inf

    @property
    def ub(self):
        return self.iterations[-1].ub if self.iterations else math.inf

    def __len__(self):
        return len(self.iterations)


@dataclass
class OuterIteration:
    index: int
    master_objective: float
    lb: float
    ub: float
    plan: ExpansionPlan
    investment: float
    eta: float
    u_next: DeviationVector
    inner: InnerLog
    master_time: float


@dataclass
class IterationLog:
    outer: list = field(default_factory=list)
    stalled: bool = False

    @property
    def outer_count(self):
        return len(self.outer)

    @property
    def inner_counts(self):
        return [len(o.inner) for o in self.outer]

    def bounds(self):
        return [(o.lb, o.ub) for o in self.outer]

    def check_monotone(self, tol=1e-6):
        """List of violated bound-monotonicity properties (empty if all hold)."""
        bad = []
        lbs = [o.lb for o in self.outer]
        ubs = [o.ub for o in self.outer]
        if any(b < a - tol for a, b in zip(lbs, lbs[1:])):
            bad.append("outer LB decreased")
        if any(b > a + tol for a, b in zip(ubs, ubs[1:])):
            bad.append("outer UB increased")
        for o in self.outer:
            ilb = [it.lb for it in o.inner.iterations]
            iub = [it.ub for it in o.inner.iterations]
            if any(b < a - tol for a, b in zip(ilb, ilb[1:])):
                bad.append(f"inner LB decreased in outer iteration {o.index}")
            if any(b > a + tol for a, b in zip(iub, iub[1:])):
                bad.append(f"inner UB increased in outer iteration {o.index}")
        if self.outer and self.outer[-1].lb > self.outer[-1].ub + tol:
            bad.append("LB above UB at termination")
        return bad

    def records(self):
        """Flat dictionaries, one per inner iteration, for structured output."""
        rows = []
        for o in self.outer:
            for it in o.inner.iterations:
                rows.append(
                    {
                        "outer": o.index,
                        "inner": it.index,
                        "outer_lb": o.lb,
                        "outer_ub": o.ub,
                        "inner_lb": it.lb,
                        "inner_ub": it.ub,
                        "subproblem_cost": it.cost,
                        "u": list(it.u.flat),
                        "time": it.time,
                    }
                )
        return rows


@dataclass
class RobustSolution:
    plan: ExpansionPlan
    worst_case_u: DeviationVector
    total_annual_cost: float  # 10^3 EUR
    capital_cost: float  # 10^3 EUR
    log: IterationLog
    lower_bound: float  # MEUR
    upper_bound: float  # MEUR
    converged: bool = True
    wall_time: float = 0.0

    @property
    def gap(self):
        return self.upper_bound - self.lower_bound

    @property
    def objective(self):
        """Total annual cost in MEUR."""
        return self.upper_bound


def _z_key(z):
    return None if z is None else z.tobytes()


def inner_loop(case, plan, tolerance=None, config=None, z_mode=Z_BINARY, max_iter=200, dual_bounds=None):
    """Worst-case operating cost of ``plan``.

    Returns ``(ub, u_worst, log)``: the converged inner upper bound (MEUR),
    the deviation vector proposed by the last inner master, and the
    per-iteration record.
    """
    tol = case.economics.inner_tolerance if tolerance is None else tolerance
    master = InnerMaster(case, plan, dual_bounds)
    ilog = InnerLog()
    lb, ub = -math.inf, math.inf
    u = DeviationVector.zeros(case)
    seen = set()
    u_next = u
    for ell in range(1, max_iter + 1):
        t0 = time.perf_counter()
        op = solve_operation(case, plan, u, z_mode=z_mode, config=config)
        lb = max(lb, op.cost)
        key = _z_key(op.z)
        xi = None
        if key in seen:
            # the cut for this pattern is already present, the master would repeat itself
            ilog.iterations.append(InnerIteration(ell, u, op.cost, op.z, lb, ub, None, time.perf_counter() - t0))
            ilog.converged = ub - lb < tol
            ilog.stalled = not ilog.converged
            if ilog.stalled:
                log.warning("inner loop stalled at gap %.3g (pattern repeated)", ub - lb)
            return ub, u_next, ilog
        seen.add(key)
        master.add_cut(op.z if z_mode == Z_BINARY else None)
        res = master.solve(config)
        xi = res.xi
        ub = min(ub, xi)
        u_next = res.u
        ilog.iterations.append(InnerIteration(ell, u, op.cost, op.z, lb, ub, xi, time.perf_counter() - t0))
        log.debug("inner %d: c=%.9f xi=%.9f LB=%.9f UB=%.9f", ell, op.cost, xi, lb, ub)
        if ub < lb - 1e-7 * max(1.0, abs(lb)):
            raise FormulationError(
                f"inner upper bound {ub} below lower bound {lb}: dual bounds cut off optimal duals"
            )
        if ub - lb < tol:
            ilog.converged = True
            return ub, u_next, ilog
        u = u_next
    raise NonConvergenceError(f"inner loop did not converge in {max_iter} iterations")


def solve_robust_tnep(case, config=None, *, z_mode=Z_BINARY, max_outer=50, max_inner=200, outer_tolerance=None,
                      inner_tolerance=None, callback=None):
    """Solve the robust expansion problem by nested column-and-constraint generation."""
    if z_mode not in (Z_BINARY, Z_RELAXED):
        raise ValueError(f"unsupported z mode {z_mode!r}")
    config = config or milp.SolverConfig()
    tol = case.economics.outer_tolerance if outer_tolerance is None else outer_tolerance
    itol = case.economics.inner_tolerance if inner_tolerance is None else inner_tolerance
    start = time.perf_counter()
    bounds = dual_variable_bound(case)
    u = DeviationVector.zeros(case)
    master = build_master(case, [u], z_mode=z_mode)
    scenarios = [u]
    olog = IterationLog()
    lb, ub = -math.inf, math.inf
    best_plan, best_u = None, u
    for j in range(1, max_outer + 1):
        t0 = time.perf_counter()
        res = milp.solve(master.builder, config)
        if res.status == milp.INFEASIBLE:
            raise MasterInfeasibleError("master problem infeasible", scenario=scenarios[-1])
        if res.status != milp.OPTIMAL:
            raise milp.SolverError(f"master problem: solver status {res.status}")
        master_time = time.perf_counter() - t0
        plan = master.plan_vars.read(res.values).nonzero()
        lb = max(lb, res.objective)
        inv = annualized_investment(case, plan)
        eta = float(res.values[master.eta])
        inner_ub, u_next, ilog = inner_loop(case, plan, itol, config, z_mode, max_inner, bounds)
        if inv + inner_ub < ub:
            ub = inv + inner_ub
            best_plan, best_u = plan, u_next
        it = OuterIteration(j, res.objective, lb, ub, plan, inv, eta, u_next, ilog, master_time)
        olog.outer.append(it)
        log.info("outer %d: LB=%.6f UB=%.6f plan=%s inner=%d", j, lb, ub, plan.describe(), len(ilog))
        if callback:
            callback(it)
        if ub - lb < tol:
            break
        if u_next in scenarios:
            olog.stalled = True
            log.warning("outer loop stalled at gap %.3g (scenario repeated)", ub - lb)
            break
        scenarios.append(u_next)
        master.add_scenario(case, u_next, z_mode=z_mode)
    else:
        partial = _solution(case, best_plan, best_u, lb, ub, olog, False, start)
        raise NonConvergenceError(f"outer loop did not converge in {max_outer} iterations", partial)
    return _solution(case, best_plan, best_u, lb, ub, olog, ub - lb < tol, start)


def _solution(case, plan, u, lb, ub, olog, converged, start):
    plan = plan or ExpansionPlan()
    return RobustSolution(
        plan=plan,
        worst_case_u=u,
        total_annual_cost=ub * 1e3,
        capital_cost=plan_capital_cost(plan, case),
        log=olog,
        lower_bound=lb,
        upper_bound=ub,
        converged=converged,
        wall_time=time.perf_counter() - start,
    )


def evaluate_plan(case, plan, config=None, z_mode=Z_BINARY):
    """Worst-case total annual cost (MEUR) of a given plan via the inner loop."""
    ub, u, ilog = inner_loop(case, plan, config=config, z_mode=z_mode)
    return annualized_investment(case, plan) + ub, u, ilog


__all__ = [
    "IterationLog",
    "InnerLog",
    "RobustSolution",
    "inner_loop",
    "solve_robust_tnep",
    "evaluate_plan",
    "solve_model",
]
