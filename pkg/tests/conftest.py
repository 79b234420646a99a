import copy
import json

import pytest
from hypothesis import HealthCheck, settings

from robust_tnep.system import bundled_case_path, load_bundled, load_case

settings.register_profile(
    "solver",
    max_examples=15,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("solver")


@pytest.fixture(scope="session")
def toy2():
    return load_bundled("toy_2bus")


@pytest.fixture(scope="session")
def toy3():
    return load_bundled("toy_3bus")


@pytest.fixture(scope="session")
def garver():
    return load_bundled("garver")


@pytest.fixture
def toy2_doc():
    return json.loads(bundled_case_path("toy_2bus").read_text())


@pytest.fixture(scope="session")
def garver_doc():
    return json.loads(bundled_case_path("garver").read_text())


def single_bus_doc(demand=50.0, capacity=80.0, cost=30.0, weight=365.0, hours=24):
    return {
        "name": "single-bus",
        "buses": [{"id": 1, "is_reference": True}],
        "generators": [
            {"id": "G", "bus": 1, "technology": "conventional", "nominal_capacity": capacity, "operating_cost": cost}
        ],
        "corridors": [],
        "storage": [],
        "demands": [{"id": "D", "bus": 1, "nominal_level": demand, "shed_cost": 1000.0, "profile": "flat"}],
        "representative_days": [{"weight": weight, "demand_factor": {"flat": [1.0] * hours}, "wind_cf": {}}],
        "economics": {"amortization_rate": 0.11, "investment_budget": 0.0},
        "uncertainty": {"budget_demand": 0, "budget_conventional": 0, "budget_wind": 0},
    }


@pytest.fixture
def single_bus():
    return load_case(single_bus_doc())


def modified(doc, fn):
    d = copy.deepcopy(doc)
    fn(d)
    return d


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
