"""Cardinality-constrained uncertainty set over demands and unit capacities.

A realization flags individual parameters: a flagged demand rises by
``demand_deviation`` of its nominal level, a flagged conventional or wind
unit loses ``gen_deviation``/``wind_deviation`` of its nominal capacity. At
most ``budget_*`` parameters per group may be flagged. Flags are constant
over every hour and representative day.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass


class UncertaintyError(ValueError):
    pass


@dataclass(frozen=True)
class UncertaintySpec:
    budget_demand: int = 0
    budget_conventional: int = 0
    budget_wind: int = 0
    demand_deviation: float = 0.20
    gen_deviation: float = 0.50
    wind_deviation: float = 0.50

    @property
    def budgets(self):
        return (self.budget_demand, self.budget_conventional, self.budget_wind)

    def validate(self, n_demand, n_conv, n_wind):
        for name, gamma, size in (
            ("budget_demand", self.budget_demand, n_demand),
            ("budget_conventional", self.budget_conventional, n_conv),
            ("budget_wind", self.budget_wind, n_wind),
        ):
            if not 0 <= gamma <= size:
                raise UncertaintyError(f"{name}={gamma} outside [0, {size}]")
        for name in ("demand_deviation", "gen_deviation", "wind_deviation"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise UncertaintyError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class DeviationVector:
    u_demand: tuple = ()
    u_conv: tuple = ()
    u_wind: tuple = ()

    @classmethod
    def zeros(cls, case):
        return cls(
            (0,) * len(case.demands),
            (0,) * len(case.conventional),
            (0,) * len(case.wind),
        )

    @classmethod
    def from_flat(cls, flat, case):
        flat = [int(round(v)) for v in flat]
        nd, nc = len(case.demands), len(case.conventional)
        return cls(tuple(flat[:nd]), tuple(flat[nd:nd + nc]), tuple(flat[nd + nc:]))

    @property
    def flat(self):
        return self.u_demand + self.u_conv + self.u_wind

    def counts(self):
        return (sum(self.u_demand), sum(self.u_conv), sum(self.u_wind))

    def describe(self, case):
        ids = [d.id for d in case.demands] + [g.id for g in case.conventional] + [g.id for g in case.wind]
        flagged = [i for i, f in zip(ids, self.flat) if f]
        return ", ".join(flagged) or "nominal"


def check_deviation(u, spec, case):
    if (len(u.u_demand), len(u.u_conv), len(u.u_wind)) != (
        len(case.demands),
        len(case.conventional),
        len(case.wind),
    ):
        raise UncertaintyError("deviation vector does not match the case dimensions")
    if any(f not in (0, 1) for f in u.flat):
        raise UncertaintyError("deviation flags must be 0 or 1")
    for got, gamma, group in zip(u.counts(), spec.budgets, ("demand", "conventional", "wind")):
        if got > gamma:
            raise UncertaintyError(f"{got} {group} parameters flagged, budget is {gamma}")


@dataclass(frozen=True)
class Realization:
    demand: dict
    capacity: dict


def realize(case, u, spec=None):
    """Per-demand levels and per-unit capacities under deviation ``u``."""
    spec = spec or case.uncertainty
    check_deviation(u, spec, case)
    demand = {
        d.id: d.nominal_level * (1.0 + spec.demand_deviation * f)
        for d, f in zip(case.demands, u.u_demand)
    }
    capacity = {
        g.id: g.nominal_capacity * (1.0 - spec.gen_deviation * f)
        for g, f in zip(case.conventional, u.u_conv)
    }
    capacity.update(
        {g.id: g.nominal_capacity * (1.0 - spec.wind_deviation * f) for g, f in zip(case.wind, u.u_wind)}
    )
    return Realization(demand, capacity)


def _group_patterns(size, budget):
    out = []
    for k in range(min(budget, size) + 1):
        for chosen in itertools.combinations(range(size), k):
            flags = [0] * size
            for i in chosen:
                flags[i] = 1
            out.append(tuple(flags))
    return out


def enumerate_vertices(spec, case):
    """Every binary deviation vector inside the three budget constraints."""
    groups = [
        _group_patterns(len(case.demands), spec.budget_demand),
        _group_patterns(len(case.conventional), spec.budget_conventional),
        _group_patterns(len(case.wind), spec.budget_wind),
    ]
    return [DeviationVector(d, c, w) for d, c, w in itertools.product(*groups)]


def count_vertices(spec, case):
    from math import comb

    total = 1
    for size, budget in zip(
        (len(case.demands), len(case.conventional), len(case.wind)), spec.budgets
    ):
        total *= sum(comb(size, k) for k in range(min(budget, size) + 1))
    return total


def emit_budget_constraints(spec, builder, u_demand, u_conv, u_wind, case=None):
    """Add the three ``sum(u) <= budget`` rows over the given binary columns.

    When ``case`` is given, the column counts must match its parameter groups.
    """
    if case is not None and (len(u_demand), len(u_conv), len(u_wind)) != (
        len(case.demands),
        len(case.conventional),
        len(case.wind),
    ):
        raise UncertaintyError("one binary variable per uncertain parameter is required")
    rows = []
    for cols, gamma, name in (
        (u_demand, spec.budget_demand, "budget_demand"),
        (u_conv, spec.budget_conventional, "budget_conventional"),
        (u_wind, spec.budget_wind, "budget_wind"),
    ):
        cols = list(cols)
        if gamma > len(cols):
            raise UncertaintyError(f"{name}={gamma} exceeds the {len(cols)} variables supplied")
        rows.append(builder.add_constraint(cols, [1.0] * len(cols), "<=", float(gamma), name=name))
    return rows
