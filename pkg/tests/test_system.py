import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_tnep.system import (
    CaseParseError,
    CaseValidationError,
    EconomicParams,
    ExpansionPlan,
    annualize,
    case_to_dict,
    check_plan,
    load_case,
    parse_case,
    plan_capital_cost,
    read_hourly_csv,
    write_hourly_csv,
)

from .conftest import modified, single_bus_doc

GAMMA0_PLAN = ExpansionPlan({"2-3": 2, "3-5": 2, "4-6": 2}, {"S6": 2})
GAMMA531_PLAN = ExpansionPlan({"2-3": 1, "2-6": 3, "3-5": 2}, {"S6": 3})


def test_garver_shape(garver):
    assert len(garver.buses) == 6
    assert len(garver.corridors) == 15
    assert len(garver.generators) == 4
    assert len(garver.storage_units) == 2
    assert len(garver.demands) == 5
    assert garver.hours == 24
    assert len(garver.representative_days) == 10


def test_garver_corridor_1_5(garver):
    c = garver.corridor("1-5")
    assert c.reactance == 0.20
    assert c.capacity == 100
    assert c.circuit_capital_cost == pytest.approx(3861.60)


def test_garver_bus6_isolated(garver):
    assert not [c for c in garver.corridors if 6 in (c.from_bus, c.to_bus) and c.existing_count]
    assert all(c.max_total_count == 3 for c in garver.corridors)


def test_empty_expansion_space_is_valid(single_bus):
    assert single_bus.corridors == ()
    assert list(single_bus.candidate_storage) == []


def test_unknown_bus_rejected(garver_doc):
    doc = modified(garver_doc, lambda d: d["demands"][0].update(bus=7))
    with pytest.raises(CaseValidationError, match="unknown bus"):
        parse_case(doc, _data_dir())


def _data_dir():
    from robust_tnep.system import bundled_case_path

    return bundled_case_path("garver").parent


def test_negative_capacity_rejected(toy2_doc):
    doc = modified(toy2_doc, lambda d: d["generators"][0].update(nominal_capacity=-1))
    with pytest.raises(CaseValidationError):
        load_case(doc)


def test_weights_must_sum_to_365(toy2_doc):
    doc = modified(toy2_doc, lambda d: d["representative_days"][0].update(weight=364.0))
    with pytest.raises(CaseValidationError, match="365"):
        load_case(doc)


def test_two_reference_buses_rejected(toy2_doc):
    doc = modified(toy2_doc, lambda d: d["buses"][1].update(is_reference=True))
    with pytest.raises(CaseValidationError):
        load_case(doc)


def test_missing_section_is_parse_error(toy2_doc):
    del toy2_doc["buses"]
    with pytest.raises(CaseParseError):
        load_case(toy2_doc)


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    with pytest.raises(CaseParseError):
        load_case(p)
    with pytest.raises(CaseParseError):
        load_case(tmp_path / "missing.json")


def test_annualize_examples():
    econ = EconomicParams()
    assert annualize(10_000, econ) == pytest.approx(1_100)
    assert annualize(0, EconomicParams(amortization_rate=0.5)) == 0
    assert annualize(3_861.60, econ) == pytest.approx(424.776)


def test_capital_cost_table_plans(garver):
    assert plan_capital_cost(GAMMA0_PLAN, garver) == pytest.approx(47_031.2, abs=0.1)
    assert plan_capital_cost(GAMMA531_PLAN, garver) == pytest.approx(58_962.0, abs=0.1)
    assert plan_capital_cost(ExpansionPlan(), garver) == 0


def test_capital_cost_unknown_ids(garver):
    with pytest.raises(KeyError):
        plan_capital_cost(ExpansionPlan({"1-7": 1}), garver)
    with pytest.raises(KeyError):
        plan_capital_cost(ExpansionPlan({}, {"S9": 1}), garver)


def test_check_plan_limits(garver):
    check_plan(GAMMA0_PLAN, garver)
    with pytest.raises(CaseValidationError):
        check_plan(ExpansionPlan({"1-2": 3}), garver)  # one circuit exists already
    with pytest.raises(CaseValidationError):
        check_plan(ExpansionPlan({}, {"S6": 4}), garver)
    with pytest.raises(CaseValidationError):
        check_plan(ExpansionPlan({"1-6": 3, "1-4": 2}, {"S6": 3}), garver)  # over budget


@given(
    a=st.dictionaries(st.sampled_from(["1-2", "1-6", "2-6", "4-6"]), st.integers(0, 2)),
    b=st.dictionaries(st.sampled_from(["3-5", "5-6", "3-4"]), st.integers(0, 2)),
    sa=st.integers(0, 3),
)
def test_capital_cost_is_linear(garver, a, b, sa):
    pa, pb = ExpansionPlan(a, {"S6": sa}), ExpansionPlan(b)
    assert plan_capital_cost(pa + pb, garver) == pytest.approx(
        plan_capital_cost(pa, garver) + plan_capital_cost(pb, garver)
    )


@pytest.mark.parametrize("name", ["toy_2bus", "toy_3bus", "garver", "relaxed_demo"])
def test_round_trip(name, tmp_path):
    from robust_tnep.system import load_bundled

    case = load_bundled(name)
    doc = json.loads(json.dumps(case_to_dict(case)))
    again = load_case(doc)
    assert again == case
    assert sum(d.weight for d in again.representative_days) == pytest.approx(365, abs=1e-6)


def test_hourly_csv_round_trip(tmp_path):
    days = {"a": {"load": [0.1, 0.2], "wind": [0.3, 0.4]}, "b": {"load": [0.5, 0.6], "wind": [0.7, 0.8]}}
    p = tmp_path / "h.csv"
    write_hourly_csv(p, days)
    assert read_hourly_csv(p) == days


def test_csv_day_section(tmp_path):
    doc = single_bus_doc(hours=2)
    write_hourly_csv(tmp_path / "days.csv", {"x": {"flat": [1.0, 0.5]}, "y": {"flat": [0.2, 0.3]}})
    doc["representative_days"] = {"csv": "days.csv", "weights": [200, 165]}
    (tmp_path / "case.json").write_text(json.dumps(doc))
    case = load_case(tmp_path / "case.json")
    assert [d.weight for d in case.representative_days] == [200, 165]
    assert case.representative_days[1].demand_factor["flat"] == (0.2, 0.3)
