"""Planning-case data model, case-file ingestion and economic helpers.

Monetary inputs are in 10^3 EUR (capital) and EUR/MWh (operation), powers in
MW and energies in MWh.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .uncertainty import UncertaintySpec

log = logging.getLogger(__name__)

CONVENTIONAL = "conventional"
WIND = "wind"
EXISTING = "existing"
CANDIDATE = "candidate"
DAYS_PER_YEAR = 365.0


class CaseError(ValueError):
    pass


class CaseParseError(CaseError):
    """The document is not a syntactically valid case file."""


class CaseValidationError(CaseError):
    """The case parsed but violates a data invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    is_reference: bool = False


@dataclass(frozen=True)
class Generator:
    id: str
    bus: int
    technology: str
    nominal_capacity: float
    operating_cost: float
    profile: str | None = None


@dataclass(frozen=True)
class StorageUnit:
    id: str
    bus: int
    status: str
    max_energy: float
    initial_energy: float
    charge_cap: float
    discharge_cap: float
    charge_eff: float
    discharge_eff: float
    max_buildable: int = 0
    unit_capital_cost: float = 0.0

    @property
    def is_candidate(self):
        return self.status == CANDIDATE


@dataclass(frozen=True)
class Demand:
    id: str
    bus: int
    nominal_level: float
    shed_cost: float
    profile: str


@dataclass(frozen=True)
class Corridor:
    from_bus: int
    to_bus: int
    reactance: float
    capacity: float
    existing_count: int
    max_total_count: int
    circuit_capital_cost: float

    @property
    def id(self):
        return f"{self.from_bus}-{self.to_bus}"

    @property
    def candidates(self):
        return self.max_total_count - self.existing_count


@dataclass(frozen=True)
class RepresentativeDay:
    weight: float
    demand_factor: Mapping[str, tuple]
    wind_cf: Mapping[str, tuple]

    @property
    def hours(self):
        for series in list(self.demand_factor.values()) + list(self.wind_cf.values()):
            return len(series)
        return 0


@dataclass(frozen=True)
class EconomicParams:
    amortization_rate: float = 0.11
    investment_budget: float = 60000.0
    outer_tolerance: float = 1e-6
    inner_tolerance: float = 1e-6


@dataclass(frozen=True)
class PlanningCase:
    buses: tuple
    generators: tuple
    storage_units: tuple
    demands: tuple
    corridors: tuple
    representative_days: tuple
    economics: EconomicParams
    uncertainty: UncertaintySpec
    base_mva: float = 100.0
    name: str = "case"

    @property
    def reference_bus(self):
        return next(b.id for b in self.buses if b.is_reference)

    @property
    def hours(self):
        return self.representative_days[0].hours if self.representative_days else 0

    @property
    def conventional(self):
        return tuple(g for g in self.generators if g.technology == CONVENTIONAL)

    @property
    def wind(self):
        return tuple(g for g in self.generators if g.technology == WIND)

    @property
    def candidate_storage(self):
        return tuple(s for s in self.storage_units if s.is_candidate)

    def corridor(self, corridor_id):
        for c in self.corridors:
            if c.id == corridor_id:
                return c
        raise KeyError(f"unknown corridor {corridor_id!r}")

    def storage(self, storage_id):
        for s in self.storage_units:
            if s.id == storage_id:
                return s
        raise KeyError(f"unknown storage site {storage_id!r}")

    def with_uncertainty(self, **budgets):
        return replace(self, uncertainty=replace(self.uncertainty, **budgets))

    def with_economics(self, **kwargs):
        return replace(self, economics=replace(self.economics, **kwargs))

    def with_days(self, days):
        return replace(self, representative_days=tuple(days))


@dataclass(frozen=True)
class ExpansionPlan:
    lines_built: Mapping[str, int] = field(default_factory=dict)
    storage_built: Mapping[str, int] = field(default_factory=dict)

    def nonzero(self):
        return ExpansionPlan(
            {k: v for k, v in self.lines_built.items() if v},
            {k: v for k, v in self.storage_built.items() if v},
        )

    def __add__(self, other):
        lines = dict(self.lines_built)
        for k, v in other.lines_built.items():
            lines[k] = lines.get(k, 0) + v
        storage = dict(self.storage_built)
        for k, v in other.storage_built.items():
            storage[k] = storage.get(k, 0) + v
        return ExpansionPlan(lines, storage)

    def key(self):
        p = self.nonzero()
        return (tuple(sorted(p.lines_built.items())), tuple(sorted(p.storage_built.items())))

    def describe(self):
        p = self.nonzero()
        parts = [f"{k} (x{v})" for k, v in sorted(p.lines_built.items())]
        parts += [f"storage@{k} (x{v})" for k, v in sorted(p.storage_built.items())]
        return ", ".join(parts) or "no expansion"


def annualize(capital, econ):
    """Annual equivalent of a capital outlay at the case's flat amortization rate."""
    if capital < 0:
        raise ValueError("capital must be non-negative")
    return capital * econ.amortization_rate


def plan_capital_cost(plan, case):
    """Capital cost (10^3 EUR) of the new circuits and storage units in ``plan``.

    A budget overrun is logged, not raised; callers that need to reject such
    plans use :func:`check_plan`.
    """
    total = 0.0
    for cid, count in plan.lines_built.items():
        total += count * case.corridor(cid).circuit_capital_cost
    for sid, count in plan.storage_built.items():
        unit = case.storage(sid)
        if not unit.is_candidate and count:
            raise KeyError(f"storage {sid!r} is not a candidate site")
        total += count * unit.unit_capital_cost
    if total > case.economics.investment_budget + 1e-6:
        log.warning("plan capital %.1f exceeds budget %.1f", total, case.economics.investment_budget)
    return total


def check_plan(plan, case):
    """Raise :class:`CaseValidationError` if ``plan`` is not buildable."""
    for cid, count in plan.lines_built.items():
        c = case.corridor(cid)
        if count < 0 or c.existing_count + count > c.max_total_count:
            raise CaseValidationError(f"corridor {cid}: {count} new circuits exceeds limit")
    for sid, count in plan.storage_built.items():
        s = case.storage(sid)
        if count and (not s.is_candidate or count > s.max_buildable or count < 0):
            raise CaseValidationError(f"storage {sid}: {count} units not buildable")
    if plan_capital_cost(plan, case) > case.economics.investment_budget + 1e-6:
        raise CaseValidationError("plan exceeds investment budget")


# ---------------------------------------------------------------------------
# case files


def _require(mapping, key, where):
    try:
        return mapping[key]
    except (KeyError, TypeError):
        raise CaseParseError(f"{where}: missing field {key!r}") from None


def read_hourly_csv(path):
    """Read an hourly CSV (``day,hour,<signal>...``) into ``{day: {signal: [...]}}``."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or reader.fieldnames[:2] != ["day", "hour"]:
                raise CaseParseError(f"{path}: header must start with 'day,hour'")
            signals = reader.fieldnames[2:]
            days = {}
            for row in reader:
                day = days.setdefault(row["day"], {s: [] for s in signals})
                for s in signals:
                    day[s].append(float(row[s]))
    except (OSError, ValueError) as exc:
        if isinstance(exc, CaseParseError):
            raise
        raise CaseParseError(f"{path}: {exc}") from exc
    return days


def write_hourly_csv(path, days):
    """Inverse of :func:`read_hourly_csv`; ``days`` maps day label -> signals."""
    days = dict(days)
    signals = list(next(iter(days.values())).keys()) if days else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "hour", *signals])
        for label, series in days.items():
            hours = len(series[signals[0]]) if signals else 0
            for h in range(hours):
                w.writerow([label, h + 1, *(repr(float(series[s][h])) for s in signals)])


def _parse_days(section, case_dir, demand_profiles, wind_profiles):
    if isinstance(section, Mapping) and "csv" in section:
        path = Path(section["csv"])
        if not path.is_absolute():
            path = case_dir / path
        table = read_hourly_csv(path)
        weights = _require(section, "weights", "representative_days")
        if len(weights) != len(table):
            raise CaseValidationError(
                f"representative_days: {len(weights)} weights for {len(table)} days in {path.name}"
            )
        raw = []
        for w, series in zip(weights, table.values()):
            raw.append(
                {
                    "weight": w,
                    "demand_factor": {p: series[p] for p in demand_profiles if p in series},
                    "wind_cf": {p: series[p] for p in wind_profiles if p in series},
                }
            )
    else:
        raw = section
    days = []
    for i, d in enumerate(raw):
        where = f"representative_days[{i}]"
        days.append(
            RepresentativeDay(
                weight=float(_require(d, "weight", where)),
                demand_factor={k: tuple(float(x) for x in v) for k, v in d.get("demand_factor", {}).items()},
                wind_cf={k: tuple(float(x) for x in v) for k, v in d.get("wind_cf", {}).items()},
            )
        )
    return tuple(days)


def parse_case(doc, case_dir="."):
    """Build a validated :class:`PlanningCase` from a decoded case document."""
    if not isinstance(doc, Mapping):
        raise CaseParseError("case document must be a mapping")
    case_dir = Path(case_dir)
    try:
        buses = tuple(Bus(int(b["id"]), bool(b.get("is_reference", False))) for b in _require(doc, "buses", "case"))
        gens = tuple(
            Generator(
                id=str(g["id"]),
                bus=int(g["bus"]),
                technology=str(g["technology"]),
                nominal_capacity=float(g["nominal_capacity"]),
                operating_cost=float(g["operating_cost"]),
                profile=g.get("profile"),
            )
            for g in doc.get("generators", [])
        )
        storage = tuple(
            StorageUnit(
                id=str(s["id"]),
                bus=int(s["bus"]),
                status=str(s["status"]),
                max_energy=float(s["max_energy"]),
                initial_energy=float(s["initial_energy"]),
                charge_cap=float(s["charge_cap"]),
                discharge_cap=float(s["discharge_cap"]),
                charge_eff=float(s["charge_eff"]),
                discharge_eff=float(s["discharge_eff"]),
                max_buildable=int(s.get("max_buildable", 0)),
                unit_capital_cost=float(s.get("unit_capital_cost", 0.0)),
            )
            for s in doc.get("storage", [])
        )
        demands = tuple(
            Demand(
                id=str(d["id"]),
                bus=int(d["bus"]),
                nominal_level=float(d["nominal_level"]),
                shed_cost=float(d["shed_cost"]),
                profile=str(d.get("profile", d["id"])),
            )
            for d in doc.get("demands", [])
        )
        corridors = tuple(
            Corridor(
                from_bus=int(c["from_bus"]),
                to_bus=int(c["to_bus"]),
                reactance=float(c["reactance"]),
                capacity=float(c["capacity"]),
                existing_count=int(c.get("existing_count", 0)),
                max_total_count=int(c["max_total_count"]),
                circuit_capital_cost=float(c.get("circuit_capital_cost", 0.0)),
            )
            for c in doc.get("corridors", [])
        )
        econ = EconomicParams(**doc.get("economics", {}))
        uspec = UncertaintySpec(**doc.get("uncertainty", {}))
        days = _parse_days(
            _require(doc, "representative_days", "case"),
            case_dir,
            {d.profile for d in demands},
            {g.profile for g in gens if g.technology == WIND},
        )
    except CaseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseParseError(f"malformed case document: {exc!r}") from exc
    case = PlanningCase(
        buses=buses,
        generators=gens,
        storage_units=storage,
        demands=demands,
        corridors=corridors,
        representative_days=days,
        economics=econ,
        uncertainty=uspec,
        base_mva=float(doc.get("base_mva", 100.0)),
        name=str(doc.get("name", "case")),
    )
    validate_case(case)
    return case


def validate_case(case):
    ids = [b.id for b in case.buses]
    if sorted(ids) != list(range(1, len(ids) + 1)):
        raise CaseValidationError("bus ids must be dense 1..N")
    if sum(b.is_reference for b in case.buses) != 1:
        raise CaseValidationError("exactly one reference bus required")
    known = set(ids)

    def bus_ok(bus, what):
        if bus not in known:
            raise CaseValidationError(f"{what}: unknown bus {bus}")

    for g in case.generators:
        bus_ok(g.bus, f"generator {g.id}")
        if g.technology not in (CONVENTIONAL, WIND):
            raise CaseValidationError(f"generator {g.id}: unknown technology {g.technology!r}")
        if g.nominal_capacity < 0 or g.operating_cost < 0:
            raise CaseValidationError(f"generator {g.id}: negative capacity or cost")
        if (g.technology == WIND) != (g.profile is not None):
            raise CaseValidationError(f"generator {g.id}: wind units need a profile, conventional units none")
    max_gen_cost = max((g.operating_cost for g in case.generators), default=0.0)
    for d in case.demands:
        bus_ok(d.bus, f"demand {d.id}")
        if d.nominal_level < 0:
            raise CaseValidationError(f"demand {d.id}: negative level")
        if d.shed_cost <= max_gen_cost:
            log.warning("demand %s: shedding cost %.1f not above generation cost", d.id, d.shed_cost)
    for s in case.storage_units:
        bus_ok(s.bus, f"storage {s.id}")
        if s.status not in (EXISTING, CANDIDATE):
            raise CaseValidationError(f"storage {s.id}: unknown status {s.status!r}")
        if not 0 <= s.initial_energy <= s.max_energy:
            raise CaseValidationError(f"storage {s.id}: initial energy outside [0, max]")
        if not (0 < s.charge_eff <= 1 and 0 < s.discharge_eff <= 1):
            raise CaseValidationError(f"storage {s.id}: efficiencies must lie in (0, 1]")
        if min(s.charge_cap, s.discharge_cap, s.max_energy) < 0:
            raise CaseValidationError(f"storage {s.id}: negative capacity")
        if s.is_candidate and s.max_buildable < 1:
            raise CaseValidationError(f"storage {s.id}: candidate needs max_buildable >= 1")
    seen = set()
    for c in case.corridors:
        bus_ok(c.from_bus, f"corridor {c.id}")
        bus_ok(c.to_bus, f"corridor {c.id}")
        if c.from_bus >= c.to_bus:
            raise CaseValidationError(f"corridor {c.id}: from_bus must be < to_bus")
        if c.id in seen:
            raise CaseValidationError(f"corridor {c.id}: duplicated")
        seen.add(c.id)
        if c.reactance <= 0:
            raise CaseValidationError(f"corridor {c.id}: reactance must be positive")
        if c.capacity < 0 or not 0 <= c.existing_count <= c.max_total_count:
            raise CaseValidationError(f"corridor {c.id}: inconsistent capacity or circuit counts")
    econ = case.economics
    if not 0 < econ.amortization_rate <= 1:
        raise CaseValidationError("amortization_rate must lie in (0, 1]")
    if econ.investment_budget < 0 or econ.outer_tolerance <= 0 or econ.inner_tolerance <= 0:
        raise CaseValidationError("budget must be >= 0 and tolerances > 0")

    days = case.representative_days
    if not days:
        raise CaseValidationError("at least one representative day required")
    total = sum(d.weight for d in days)
    if abs(total - DAYS_PER_YEAR) > 1e-6:
        raise CaseValidationError(f"representative-day weights sum to {total}, expected 365")
    hours = days[0].hours
    needed_demand = {d.profile for d in case.demands}
    needed_wind = {g.profile for g in case.wind}
    for i, day in enumerate(days):
        if day.weight <= 0:
            raise CaseValidationError(f"representative day {i}: weight must be positive")
        missing = (needed_demand - set(day.demand_factor)) | (needed_wind - set(day.wind_cf))
        if missing:
            raise CaseValidationError(f"representative day {i}: missing profiles {sorted(missing)}")
        for name, series in list(day.demand_factor.items()) + list(day.wind_cf.items()):
            if len(series) != hours or hours == 0:
                raise CaseValidationError(f"representative day {i}: profile {name} has {len(series)} hours")
            if min(series) < 0:
                raise CaseValidationError(f"representative day {i}: negative factor in {name}")
        for name, series in day.wind_cf.items():
            if max(series) > 1:
                raise CaseValidationError(f"representative day {i}: wind factor above 1 in {name}")
    case.uncertainty.validate(len(case.demands), len(case.conventional), len(case.wind))


def load_case(source):
    """Load a case from a path or from an already-decoded document."""
    if isinstance(source, Mapping):
        return parse_case(source)
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseParseError(f"cannot read case file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"{path}: {exc}") from exc
    return parse_case(doc, path.parent)


def case_to_dict(case):
    """Serialize ``case`` to a document that :func:`parse_case` reads back."""

    def nonempty(d):
        return {k: v for k, v in d.items() if v is not None}

    return {
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [{"id": b.id, "is_reference": b.is_reference} for b in case.buses],
        "generators": [nonempty(vars(g).copy()) for g in case.generators],
        "storage": [vars(s).copy() for s in case.storage_units],
        "demands": [vars(d).copy() for d in case.demands],
        "corridors": [
            {k: v for k, v in vars(c).items()} for c in case.corridors
        ],
        "representative_days": [
            {
                "weight": d.weight,
                "demand_factor": {k: list(v) for k, v in d.demand_factor.items()},
                "wind_cf": {k: list(v) for k, v in d.wind_cf.items()},
            }
            for d in case.representative_days
        ],
        "economics": vars(case.economics).copy(),
        "uncertainty": vars(case.uncertainty).copy(),
    }


def dump_case(case, path):
    Path(path).write_text(json.dumps(case_to_dict(case), indent=1))


def bundled_case_path(name):
    """Path of a case file shipped in the package's ``data`` directory."""
    path = Path(__file__).parent / "data" / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"no bundled case named {name!r}")
    return path


def load_bundled(name):
    return load_case(bundled_case_path(name))
