"""Optimization models of the robust expansion problem.

All models share one operational block (:func:`_add_operation`) describing a
year of representative-day operation under a given deviation vector. The
block is instantiated

* with a fixed plan and binary storage modes: the recourse MILP, also used
  as the inner-loop subproblem;
* with the master's investment variables: one copy per identified scenario
  in the outer master;
* with a fixed plan and fixed storage modes: a pure LP whose standard form
  is dualized symbolically for the inner-loop master.

Objective values are in millions of EUR (MEUR). Deviation flags enter the
models only through constraint right-hand sides, as builder parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import milp
from .milp import BINARY, INF, ModelBuilder, SolverConfig, extract_standard_form
from .system import ExpansionPlan, check_plan
from .uncertainty import DeviationVector, check_deviation, emit_budget_constraints

EUR_TO_MEUR = 1e-6
KEUR_TO_MEUR = 1e-3

Z_BINARY = "binary"
Z_FIXED = "fixed"
Z_RELAXED = "relaxed"


class FormulationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# static case data in array form


@dataclass(frozen=True)
class _Net:
    bus_pos: dict
    demand_bus: np.ndarray
    gen_bus: np.ndarray
    gen_cost: np.ndarray
    gen_cap: np.ndarray
    gen_dev: np.ndarray  # fractional capacity loss when flagged
    gen_param: np.ndarray  # position of the unit's flag in the flat u vector
    gen_cf: np.ndarray  # [day, hour, gen]
    dem_level: np.ndarray
    dem_factor: np.ndarray  # [day, hour, demand]
    shed_cost: np.ndarray
    weights: np.ndarray
    theta_max: float
    angle_gap: dict  # corridor id -> bound on |angle difference| (rad)


def angle_bound(case):
    """Bound on |bus angle| (rad) that never cuts off a feasible dispatch.

    Any bus of the reference island is reached over at most N-1 circuits, each
    carrying at most its capacity; the bound is the largest such spread, or
    pi if that is larger.
    """
    spreads = sorted(
        (c.capacity * c.reactance / case.base_mva for c in case.corridors), reverse=True
    )
    path = sum(spreads[: max(len(case.buses) - 1, 0)])
    return max(math.pi, path)


def angle_gaps(case):
    """Per-corridor bound on the angle difference across it, for the big-M.

    Ends joined by existing circuits are at most the shortest such path
    apart. Otherwise any connecting path of built circuits has at most N-1
    corridors; ends left in separate islands can be shifted together.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import shortest_path

    n = len(case.buses)
    pos = {b.id: i for i, b in enumerate(case.buses)}
    spread = {c.id: c.capacity * c.reactance / case.base_mva for c in case.corridors}
    tree = sum(sorted(spread.values(), reverse=True)[: max(n - 1, 0)])
    old = [c for c in case.corridors if c.existing_count]
    if old:
        g = coo_matrix(
            ([spread[c.id] for c in old], ([pos[c.from_bus] for c in old], [pos[c.to_bus] for c in old])), shape=(n, n)
        )
        dist = shortest_path(g.tocsr(), directed=False)
    else:
        dist = np.full((n, n), np.inf)
    return {c.id: float(min(tree, dist[pos[c.from_bus], pos[c.to_bus]])) for c in case.corridors}


_NET_CACHE = {}


def _net(case):
    hit = _NET_CACHE.get(id(case))
    if hit is not None and hit[0] is case:
        return hit[1]
    if len(_NET_CACHE) > 64:
        _NET_CACHE.clear()
    net = _build_net(case)
    _NET_CACHE[id(case)] = (case, net)
    return net


def _build_net(case):
    days = case.representative_days
    H = case.hours
    conv, wind = case.conventional, case.wind
    gens = list(conv) + list(wind)
    nd = len(case.demands)
    spec = case.uncertainty
    gen_cf = np.ones((len(days), H, len(gens)))
    for di, day in enumerate(days):
        for k, g in enumerate(wind):
            gen_cf[di, :, len(conv) + k] = day.wind_cf[g.profile]
    dem_factor = np.zeros((len(days), H, nd))
    for di, day in enumerate(days):
        for k, d in enumerate(case.demands):
            dem_factor[di, :, k] = day.demand_factor[d.profile]
    bus_pos = {b.id: i for i, b in enumerate(case.buses)}
    return _Net(
        bus_pos=bus_pos,
        demand_bus=np.array([bus_pos[d.bus] for d in case.demands], dtype=int),
        gen_bus=np.array([bus_pos[g.bus] for g in gens], dtype=int),
        gen_cost=np.array([g.operating_cost for g in gens]),
        gen_cap=np.array([g.nominal_capacity for g in gens]),
        gen_dev=np.array([spec.gen_deviation] * len(conv) + [spec.wind_deviation] * len(wind)),
        gen_param=np.arange(nd, nd + len(gens)),
        gen_cf=gen_cf,
        dem_level=np.array([d.nominal_level for d in case.demands]),
        dem_factor=dem_factor,
        shed_cost=np.array([d.shed_cost for d in case.demands]),
        weights=np.array([d.weight for d in days]),
        theta_max=angle_bound(case),
        angle_gap=angle_gaps(case),
    )


def generators_in_order(case):
    """Generators in the column order used by every model: conventional, then wind."""
    return list(case.conventional) + list(case.wind)


# ---------------------------------------------------------------------------
# the operational block


@dataclass
class PlanVars:
    """Investment variables: one binary per candidate circuit / storage unit."""

    lines: dict = field(default_factory=dict)
    storage: dict = field(default_factory=dict)

    def read(self, values):
        lines = {cid: int(round(sum(values[v] for v in vs))) for cid, vs in self.lines.items()}
        storage = {sid: int(round(sum(values[v] for v in vs))) for sid, vs in self.storage.items()}
        return ExpansionPlan(lines, storage)


@dataclass
class OperationBlock:
    p: np.ndarray
    ls: np.ndarray
    theta: np.ndarray
    pc: np.ndarray
    pd: np.ndarray
    e: np.ndarray
    z: np.ndarray | None
    flows: dict
    u_params: list
    cost_cols: list
    cost_coefs: list

    def cost(self, values):
        return float(np.dot(values[self.cost_cols], self.cost_coefs))


def _add_operation(mb, case, u_values, *, plan=None, plan_vars=None, z_mode=Z_BINARY,
                   z_fixed=None, big_m_scale=1.0, tag=""):
    if (plan is None) == (plan_vars is None):
        raise FormulationError("exactly one of plan / plan_vars is required")
    if z_mode not in (Z_BINARY, Z_FIXED, Z_RELAXED):
        raise FormulationError(f"unknown z mode {z_mode!r}")
    net = _net(case)
    spec = case.uncertainty
    D, H = len(case.representative_days), case.hours
    n_bus, n_gen, n_dem = len(case.buses), len(net.gen_cap), len(case.demands)
    stores = case.storage_units
    S = len(stores)
    if z_mode == Z_FIXED:
        z_fixed = np.asarray(z_fixed)
        if z_fixed.shape != (D, H, S):
            raise FormulationError(f"z_fixed must have shape {(D, H, S)}, got {z_fixed.shape}")
    if len(u_values) != n_dem + n_gen:
        raise FormulationError("deviation vector length does not match the case")
    u_par = [mb.add_param(v, f"{tag}u[{i}]") for i, v in enumerate(u_values)]
    tm = net.theta_max

    # storage availability: a constant count, or the sum of unit-build binaries
    st_count = []
    st_limit = []  # units that may operate at most (scales the mode constraints)
    for s in stores:
        if not s.is_candidate:
            st_count.append(1)
            st_limit.append(1)
        elif plan is not None:
            n = int(plan.storage_built.get(s.id, 0))
            st_count.append(n)
            st_limit.append(n)
        else:
            st_count.append(None)
            st_limit.append(s.max_buildable)

    p = np.empty((D, H, n_gen), dtype=int)
    ls = np.empty((D, H, n_dem), dtype=int)
    theta = np.empty((D, H, n_bus), dtype=int)
    pc = np.empty((D, H, S), dtype=int)
    pd = np.empty((D, H, S), dtype=int)
    e = np.empty((D, H, S), dtype=int)
    z = np.empty((D, H, S), dtype=int) if z_mode == Z_BINARY else None
    flows = {}
    cost_cols, cost_coefs = [], []

    # circuits: (corridor, from, to, susceptance MW/rad, capacity, count, x var or None)
    circuits = []
    for c in case.corridors:
        b = case.base_mva / c.reactance
        i, j = net.bus_pos[c.from_bus], net.bus_pos[c.to_bus]
        if plan is not None:
            n = c.existing_count + int(plan.lines_built.get(c.id, 0))
            if n:
                circuits.append((c.id, i, j, b, c.capacity, n, None, None))
        else:
            if c.existing_count:
                circuits.append((c.id, i, j, b, c.capacity, c.existing_count, None, None))
            for k, xv in enumerate(plan_vars.lines.get(c.id, [])):
                circuits.append((f"{c.id}#{k + 1}", i, j, b, c.capacity, 1, xv, net.angle_gap[c.id]))

    for d in range(D):
        w = net.weights[d] * EUR_TO_MEUR
        for t in range(H):
            tt = f"{tag}[{d},{t}]"
            p[d, t] = mb.add_vars(n_gen, 0.0, INF, name=f"p{tt}")
            ls[d, t] = mb.add_vars(n_dem, 0.0, INF, name=f"ls{tt}")
            theta[d, t] = mb.add_vars(n_bus, -tm, tm, name=f"theta{tt}")
            for si, s in enumerate(stores):
                n = st_count[si]
                pc[d, t, si] = mb.add_var(0.0, INF if n is None else s.charge_cap * n, name=f"pc{tt}{s.id}")
                pd[d, t, si] = mb.add_var(0.0, INF if n is None else s.discharge_cap * n, name=f"pd{tt}{s.id}")
                e[d, t, si] = mb.add_var(0.0, INF if n is None else s.max_energy * n, name=f"e{tt}{s.id}")
                if z is not None:
                    z[d, t, si] = mb.add_var(0.0, 1.0, BINARY, name=f"z{tt}{s.id}")
            cost_cols.extend(p[d, t])
            cost_coefs.extend(w * net.gen_cost)
            cost_cols.extend(ls[d, t])
            cost_coefs.extend(w * net.shed_cost)

            # flows
            bal = [([], []) for _ in range(n_bus)]
            for cid, i, j, b, cap, n, xv, gap in circuits:
                if xv is None:
                    f = mb.add_var(-cap * n, cap * n, name=f"f{tt}{cid}")
                    mb.add_constraint([f, theta[d, t, i], theta[d, t, j]], [1.0, -n * b, n * b], "==", 0.0,
                                      name=f"flow{tt}{cid}")
                else:
                    f = mb.add_var(-cap, cap, name=f"f{tt}{cid}")
                    big_m = big_m_scale * gap * b
                    mb.add_constraint([f, xv], [1.0, -cap], "<=", 0.0, name=f"fmax{tt}{cid}")
                    mb.add_constraint([f, xv], [1.0, cap], ">=", 0.0, name=f"fmin{tt}{cid}")
                    cols = [f, theta[d, t, i], theta[d, t, j], xv]
                    mb.add_constraint(cols, [1.0, -b, b, big_m], "<=", big_m, name=f"kvl+{tt}{cid}")
                    mb.add_constraint(cols, [1.0, -b, b, -big_m], ">=", -big_m, name=f"kvl-{tt}{cid}")
                flows.setdefault(cid, np.empty((D, H), dtype=int))[d, t] = f
                bal[i][0].append(f)
                bal[i][1].append(-1.0)
                bal[j][0].append(f)
                bal[j][1].append(1.0)

            for g in range(n_gen):
                k = net.gen_bus[g]
                bal[k][0].append(p[d, t, g])
                bal[k][1].append(1.0)
            for si, s in enumerate(stores):
                k = net.bus_pos[s.bus]
                bal[k][0].extend([pd[d, t, si], pc[d, t, si]])
                bal[k][1].extend([1.0, -1.0])

            # nodal balance and shedding limits
            rhs = np.zeros(n_bus)
            prm = [[] for _ in range(n_bus)]
            for q in range(n_dem):
                k = net.demand_bus[q]
                level = net.dem_level[q] * net.dem_factor[d, t, q]
                bal[k][0].append(ls[d, t, q])
                bal[k][1].append(1.0)
                rhs[k] += level
                prm[k].append((u_par[q], level * spec.demand_deviation))
                mb.add_constraint([ls[d, t, q]], [1.0], "<=", level,
                                  params=[(u_par[q], level * spec.demand_deviation)], name=f"shed{tt}{q}")
            for k in range(n_bus):
                mb.add_constraint(bal[k][0], bal[k][1], "==", rhs[k], params=prm[k], name=f"bal{tt}{k}")

            for g in range(n_gen):
                avail = net.gen_cap[g] * net.gen_cf[d, t, g]
                mb.add_constraint([p[d, t, g]], [1.0], "<=", avail,
                                  params=[(u_par[net.gen_param[g]], -avail * net.gen_dev[g])], name=f"gmax{tt}{g}")

            mb.add_constraint([theta[d, t, net.bus_pos[case.reference_bus]]], [1.0], "==", 0.0, name=f"ref{tt}")

            # storage
            for si, s in enumerate(stores):
                cols = [e[d, t, si], pc[d, t, si], pd[d, t, si]]
                coefs = [1.0, -s.charge_eff, 1.0 / s.discharge_eff]
                if t > 0:
                    mb.add_constraint(cols + [e[d, t - 1, si]], coefs + [-1.0], "==", 0.0, name=f"soc{tt}{s.id}")
                elif st_count[si] is not None:
                    mb.add_constraint(cols, coefs, "==", s.initial_energy * st_count[si], name=f"soc{tt}{s.id}")
                else:
                    units = plan_vars.storage[s.id]
                    mb.add_constraint(cols + list(units), coefs + [-s.initial_energy] * len(units), "==", 0.0,
                                      name=f"soc{tt}{s.id}")
                if st_count[si] is None:
                    units = list(plan_vars.storage[s.id])
                    for var, size in ((pc, s.charge_cap), (pd, s.discharge_cap), (e, s.max_energy)):
                        mb.add_constraint([var[d, t, si]] + units, [1.0] + [-size] * len(units), "<=", 0.0,
                                          name=f"stcap{tt}{s.id}")
                lim = st_limit[si]
                if z_mode == Z_BINARY:
                    mb.add_constraint([pc[d, t, si], z[d, t, si]], [1.0, -s.charge_cap * lim], "<=", 0.0,
                                      name=f"zc{tt}{s.id}")
                    mb.add_constraint([pd[d, t, si], z[d, t, si]], [1.0, s.discharge_cap * lim], "<=",
                                      s.discharge_cap * lim, name=f"zd{tt}{s.id}")
                elif z_mode == Z_FIXED:
                    zf = float(z_fixed[d, t, si])
                    mb.add_constraint([pc[d, t, si]], [1.0], "<=", s.charge_cap * lim * zf, name=f"zc{tt}{s.id}")
                    mb.add_constraint([pd[d, t, si]], [1.0], "<=", s.discharge_cap * lim * (1.0 - zf),
                                      name=f"zd{tt}{s.id}")

        # cyclic terminal condition per representative day
        for si, s in enumerate(stores):
            if st_count[si] is not None:
                mb.add_constraint([e[d, H - 1, si]], [1.0], ">=", s.initial_energy * st_count[si],
                                  name=f"soc_end{tag}[{d}]{s.id}")
            else:
                units = list(plan_vars.storage[s.id])
                mb.add_constraint([e[d, H - 1, si]] + units, [1.0] + [-s.initial_energy] * len(units), ">=", 0.0,
                                  name=f"soc_end{tag}[{d}]{s.id}")

    return OperationBlock(p, ls, theta, pc, pd, e, z, flows, u_par, cost_cols, cost_coefs)


def _flat_u(case, u):
    if isinstance(u, DeviationVector):
        check_deviation(u, case.uncertainty, case)
        return [float(v) for v in u.flat]
    return [float(v) for v in u]


# ---------------------------------------------------------------------------
# recourse (lower-level) problem


@dataclass
class OperationalModel:
    builder: ModelBuilder
    block: OperationBlock
    plan: ExpansionPlan
    plan_vars: PlanVars | None = None


@dataclass
class Operation:
    """Solved recourse problem: cost in MEUR plus the dispatch."""

    cost: float
    z: np.ndarray | None
    charge: np.ndarray
    discharge: np.ndarray
    energy: np.ndarray
    generation: np.ndarray
    shedding: np.ndarray
    flows: dict
    stats: dict = field(default_factory=dict)

    def simultaneous(self, tol=1e-9):
        """Boolean [day, hour, storage] mask of hours that charge and discharge at once."""
        return (self.charge > tol) & (self.discharge > tol)


def build_operational_model(case, plan, u, z_mode=Z_BINARY, z_fixed=None, disjunctive=False, big_m_scale=1.0):
    """Recourse model for a fixed plan and deviation vector.

    With ``disjunctive=True`` the plan is imposed by fixing the master's
    per-circuit binaries, so the candidate circuits keep their big-M form.
    """
    check_plan(plan, case)
    mb = ModelBuilder("operation", "min")
    pv = None
    if disjunctive:
        pv = _add_plan_vars(mb, case)
        for cid, vs in pv.lines.items():
            built = int(plan.lines_built.get(cid, 0))
            for k, v in enumerate(vs):
                mb.set_bounds(v, float(k < built), float(k < built))
        for sid, vs in pv.storage.items():
            built = int(plan.storage_built.get(sid, 0))
            for k, v in enumerate(vs):
                mb.set_bounds(v, float(k < built), float(k < built))
        block = _add_operation(mb, case, _flat_u(case, u), plan_vars=pv, z_mode=z_mode, z_fixed=z_fixed,
                               big_m_scale=big_m_scale)
    else:
        block = _add_operation(mb, case, _flat_u(case, u), plan=plan, z_mode=z_mode, z_fixed=z_fixed)
    mb.set_objective(block.cost_cols, block.cost_coefs)
    return OperationalModel(mb, block, plan, pv)


def build_inner_subproblem(case, plan, u, z_mode=Z_BINARY):
    """Inner-loop subproblem: the recourse model at ``(plan, u)``."""
    return build_operational_model(case, plan, u, z_mode=z_mode)


def _read_operation(block, values, stats):
    flows = {cid: values[idx] for cid, idx in block.flows.items()}
    z = None if block.z is None else np.rint(values[block.z]).astype(int)
    return Operation(
        cost=block.cost(values),
        z=z,
        charge=values[block.pc],
        discharge=values[block.pd],
        energy=values[block.e],
        generation=values[block.p],
        shedding=values[block.ls],
        flows=flows,
        stats=stats,
    )


def solve_model(mb, config=None, what="model"):
    res = milp.solve(mb, config)
    if res.status != milp.OPTIMAL:
        raise milp.SolverError(f"{what}: solver status {res.status}")
    return res


def solve_operation(case, plan, u, z_mode=Z_BINARY, z_fixed=None, config=None, **kwargs):
    om = build_operational_model(case, plan, u, z_mode=z_mode, z_fixed=z_fixed, **kwargs)
    res = solve_model(om.builder, config, "operational model")
    op = _read_operation(om.block, res.values, res.stats)
    op.cost = res.objective
    return op


# ---------------------------------------------------------------------------
# outer master


@dataclass
class ScenarioColumn:
    index: int
    u: DeviationVector
    block: OperationBlock | None = None


@dataclass
class MasterModel:
    builder: ModelBuilder
    plan_vars: PlanVars
    eta: int
    scenarios: list

    def add_scenario(self, case, u, z_mode=Z_BINARY):
        """Append a scenario copy (operation block and ``eta`` cut) in place."""
        sc = ScenarioColumn(len(self.scenarios) + 1, u)
        sc.block = _add_operation(self.builder, case, _flat_u(case, u), plan_vars=self.plan_vars, z_mode=z_mode,
                                  tag=f"s{sc.index}")
        self.builder.add_constraint([self.eta] + list(sc.block.cost_cols), [1.0] + [-c for c in sc.block.cost_coefs],
                                    ">=", 0.0, name=f"eta{sc.index}")
        self.scenarios.append(sc)
        return sc


def _add_plan_vars(mb, case):
    pv = PlanVars()
    for c in case.corridors:
        if c.candidates > 0:
            xs = [mb.add_var(0.0, 1.0, BINARY, name=f"x[{c.id}#{k + 1}]") for k in range(c.candidates)]
            for a, b in zip(xs, xs[1:]):
                mb.add_constraint([a, b], [1.0, -1.0], ">=", 0.0, name=f"order[{c.id}]")
            pv.lines[c.id] = xs
    for s in case.candidate_storage:
        xs = [mb.add_var(0.0, 1.0, BINARY, name=f"x[{s.id}#{k + 1}]") for k in range(s.max_buildable)]
        for a, b in zip(xs, xs[1:]):
            mb.add_constraint([a, b], [1.0, -1.0], ">=", 0.0, name=f"order[{s.id}]")
        pv.storage[s.id] = xs
    return pv


def build_master(case, scenarios=(), z_mode=Z_BINARY):
    """Outer master: investment variables, budget row and one copy per scenario.

    ``scenarios`` is a sequence of deviation vectors; the model can be grown
    later with :meth:`MasterModel.add_scenario`.
    """
    mb = ModelBuilder("master", "min")
    pv = _add_plan_vars(mb, case)
    rate = case.economics.amortization_rate
    cols, capital, annual = [], [], []
    for c in case.corridors:
        for v in pv.lines.get(c.id, []):
            cols.append(v)
            capital.append(c.circuit_capital_cost)
    for s in case.candidate_storage:
        for v in pv.storage[s.id]:
            cols.append(v)
            capital.append(s.unit_capital_cost)
    annual = [KEUR_TO_MEUR * rate * k for k in capital]
    if cols:
        mb.add_constraint(cols, capital, "<=", case.economics.investment_budget, name="budget")
    eta = mb.add_var(0.0, INF, name="eta")
    mb.set_objective(cols + [eta], annual + [1.0])
    master = MasterModel(mb, pv, eta, [])
    for u in scenarios:
        master.add_scenario(case, u, z_mode)
    return master


def annualized_investment(case, plan):
    """Annualized capital cost of ``plan`` in MEUR."""
    from .system import annualize, plan_capital_cost

    return KEUR_TO_MEUR * annualize(plan_capital_cost(plan, case), case.economics)


# ---------------------------------------------------------------------------
# dualization and the inner-loop master


def linearize_product(binary_var, continuous_var, lower, upper, builder, name="w"):
    """Exact linear model of ``w = binary * continuous`` for bounded ``continuous``."""
    if not (math.isfinite(lower) and math.isfinite(upper)):
        raise FormulationError("linearize_product needs finite bounds on the continuous factor")
    if lower > upper:
        raise FormulationError("lower bound above upper bound")
    w = builder.add_var(min(lower, 0.0), max(upper, 0.0), name=name)
    b, x = binary_var, continuous_var
    builder.add_constraint([w, b], [1.0, -upper], "<=", 0.0, name=f"{name}:ub")
    builder.add_constraint([w, b], [1.0, -lower], ">=", 0.0, name=f"{name}:lb")
    builder.add_constraint([w, x, b], [1.0, -1.0, -lower], "<=", -lower, name=f"{name}:xl")
    builder.add_constraint([w, x, b], [1.0, -1.0, -upper], ">=", -upper, name=f"{name}:xu")
    return w


@dataclass
class DualSystem:
    """Dual of ``min c.y : E y = r0 + R u, F y >= s0 + S u``.

    Feasibility is ``E^T lam + F^T mu = c, mu >= 0``; the objective is
    ``(r0 + R u).lam + (s0 + S u).mu + constant``.
    """

    form: milp.StandardForm

    @property
    def n_eq(self):
        return self.form.E.shape[0]

    @property
    def n_ineq(self):
        return self.form.F.shape[0]

    def add_to(self, builder, name="dual"):
        """Declare ``lam``/``mu`` in ``builder`` with the feasibility rows.

        Returns the variable indices of ``lam`` and ``mu``.
        """
        f = self.form
        lam = np.array([builder.add_var(-INF, INF) for _ in range(self.n_eq)], dtype=int)
        mu = np.array([builder.add_var(0.0, INF) for _ in range(self.n_ineq)], dtype=int)
        block = sp.hstack([f.E.T, f.F.T], format="csr")
        builder.add_constraint_block(block, np.concatenate([lam, mu]), "==", f.c, name=f"{name}:feas")
        return lam, mu

    def objective(self, u):
        """Dual objective coefficients on ``(lam, mu)`` at a fixed ``u``."""
        if isinstance(u, DeviationVector):
            u = u.flat
        r, s = self.form.rhs(u)
        return r, s

    def sensitivity(self, i):
        """Coefficients of ``u_i`` in the dual objective, on ``lam`` and ``mu``."""
        return self.form.R[:, i].toarray().ravel(), self.form.S[:, i].toarray().ravel()


def dualize_operational_lp(case, plan, z_fixed, u=None, relaxed=False):
    """Symbolic dual of the recourse LP with storage modes fixed to ``z_fixed``.

    The deviation vector stays symbolic: it is a parameter of the primal and
    appears only in the dual objective. ``u`` only sets the stored parameter
    values. With ``relaxed`` the mode constraints are dropped instead.
    """
    u = DeviationVector.zeros(case) if u is None else u
    if relaxed:
        om = build_operational_model(case, plan, u, z_mode=Z_RELAXED)
        return DualSystem(extract_standard_form(om.builder))
    if z_fixed is None:
        raise FormulationError("a complete z pattern is required")
    om = build_operational_model(case, plan, u, z_mode=Z_FIXED, z_fixed=z_fixed)
    return DualSystem(extract_standard_form(om.builder))


def solve_dual(dual, u, config=None):
    """Solve the dual LP at a fixed deviation vector; returns its optimal value."""
    mb = ModelBuilder("dual", "max")
    lam, mu = dual.add_to(mb)
    r, s = dual.objective(u)
    mb.set_objective(np.concatenate([lam, mu]), np.concatenate([r, s]), constant=dual.form.constant)
    return solve_model(mb, config, "dual LP").objective


def dual_variable_bound(case):
    """Valid bound (MEUR) on each dual sensitivity to a deviation flag.

    With ``V(u)`` the recourse value, any optimal dual gives a subgradient
    ``g`` of the convex function ``V`` with
    ``V(u) - V(u - e_i) <= g_i <= (V(u + t e_i) - V(u)) / t``. Since
    ``0 <= V <= cost of shedding every demand at twice the deviation``,
    ``g_i`` lies in ``[-Vmax, Vmax / t]``; ``t <= 1`` keeps capacities
    non-negative.
    """
    net = _net(case)
    spec = case.uncertainty
    shed_all = 0.0
    for d, w in enumerate(net.weights):
        shed_all += w * np.sum(net.shed_cost * net.dem_level * net.dem_factor[d]) * (1.0 + 2.0 * spec.demand_deviation)
    vmax = shed_all * EUR_TO_MEUR
    t = 1.0
    for dev in (spec.gen_deviation, spec.wind_deviation):
        if dev > 0.5:
            t = min(t, max((1.0 - dev) / dev, 1e-3))
    return -vmax, vmax / t


@dataclass
class InnerMasterResult:
    xi: float
    u: DeviationVector
    stats: dict


class InnerMaster:
    """Worst-case identification MILP over ``(xi, u, lam_k, mu_k)``.

    Cuts for new storage-mode patterns are appended in place, so the model
    grows across inner iterations instead of being rebuilt.
    """

    def __init__(self, case, plan, dual_bounds=None):
        self.case = case
        self.plan = plan
        self.bounds = dual_bounds or dual_variable_bound(case)
        mb = ModelBuilder("inner_master", "max")
        nd, nc, nw = len(case.demands), len(case.conventional), len(case.wind)
        self.u = np.array([mb.add_var(0.0, 1.0, BINARY, name=f"u[{i}]") for i in range(nd + nc + nw)], dtype=int)
        emit_budget_constraints(case.uncertainty, mb, self.u[:nd], self.u[nd:nd + nc], self.u[nd + nc:], case)
        self.xi = mb.add_var(-INF, INF, name="xi")
        mb.set_objective([self.xi], [1.0])
        self.builder = mb
        self.patterns = []

    def add_cut(self, z_fixed):
        """Append the cut of pattern ``z_fixed`` (``None``: relaxed modes)."""
        dual = dualize_operational_lp(self.case, self.plan, z_fixed, relaxed=z_fixed is None)
        k = len(self.patterns) + 1
        mb = self.builder
        lam, mu = dual.add_to(mb, name=f"k{k}")
        f = dual.form
        cols = [self.xi] + list(lam) + list(mu)
        coefs = [1.0] + list(-f.r0) + list(-f.s0)
        lo, hi = self.bounds
        for i in range(len(self.u)):
            ri, si = dual.sensitivity(i)
            nz_r, nz_s = np.flatnonzero(ri), np.flatnonzero(si)
            if not len(nz_r) and not len(nz_s):
                continue
            g = mb.add_var(lo, hi, name=f"g[{k},{i}]")
            mb.add_constraint([g] + list(lam[nz_r]) + list(mu[nz_s]),
                              [1.0] + list(-ri[nz_r]) + list(-si[nz_s]), "==", 0.0, name=f"g[{k},{i}]")
            w = linearize_product(self.u[i], g, lo, hi, mb, name=f"w[{k},{i}]")
            cols.append(w)
            coefs.append(-1.0)
        mb.add_constraint(cols, coefs, "<=", f.constant, name=f"cut{k}")
        self.patterns.append(None if z_fixed is None else np.asarray(z_fixed))

    def solve(self, config=None):
        if not self.patterns:
            raise FormulationError("inner master needs at least one storage-mode pattern")
        res = milp.solve(self.builder, config)
        if res.status == milp.UNBOUNDED:
            raise FormulationError("inner master unbounded: dual bounds missing or too loose")
        if res.status != milp.OPTIMAL:
            raise milp.SolverError(f"inner master: solver status {res.status}")
        u = DeviationVector.from_flat(res.values[self.u], self.case)
        return InnerMasterResult(res.objective, u, res.stats)


def build_inner_master(case, plan, z_list, dual_bounds=None):
    """Inner-loop master for the patterns ``z_list`` (at least one)."""
    if not len(z_list):
        raise FormulationError("z_list must not be empty")
    im = InnerMaster(case, plan, dual_bounds)
    for z in z_list:
        im.add_cut(z)
    return im
