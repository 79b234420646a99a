import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_tnep.formulation import Z_RELAXED, FormulationError, annualized_investment
from robust_tnep.nested_ccg import (
    IterationLog,
    NonConvergenceError,
    evaluate_plan,
    inner_loop,
    solve_robust_tnep,
)
from robust_tnep.oracle import brute_force_worst_case, relaxed_demo_case
from robust_tnep.system import ExpansionPlan, load_case

from .conftest import single_bus_doc

TOY3_PLANS = [ExpansionPlan(), ExpansionPlan({"1-3": 1}), ExpansionPlan({"1-2": 1}, {"S2": 1})]


@pytest.mark.parametrize("plan", TOY3_PLANS)
def test_inner_loop_matches_brute_force(toy3, plan):
    ub, u, ilog = inner_loop(toy3, plan)
    best, arg = brute_force_worst_case(toy3, plan)
    assert ilog.converged
    assert ub == pytest.approx(best, abs=1e-6)


def test_zero_budget_is_one_outer_iteration(toy3):
    case = toy3.with_uncertainty(budget_demand=0, budget_conventional=0, budget_wind=0)
    sol = solve_robust_tnep(case)
    assert sol.log.outer_count == 1
    assert sol.converged
    assert sol.gap <= 1e-6


@given(d=st.integers(0, 2), g=st.integers(0, 1), w=st.integers(0, 1))
def test_bounds_are_monotone(toy3, d, g, w):
    case = toy3.with_uncertainty(budget_demand=d, budget_conventional=g, budget_wind=w)
    sol = solve_robust_tnep(case)
    assert sol.log.check_monotone() == []
    assert sol.lower_bound <= sol.upper_bound + 1e-6


def test_solution_units_and_plan_cost(toy3):
    sol = solve_robust_tnep(toy3)
    assert sol.total_annual_cost == pytest.approx(sol.upper_bound * 1e3)
    total, _, _ = evaluate_plan(toy3, sol.plan)
    assert total == pytest.approx(sol.upper_bound, abs=1e-6)
    assert sol.upper_bound >= annualized_investment(toy3, sol.plan)


def test_records_are_flat(toy3):
    sol = solve_robust_tnep(toy3)
    rows = sol.log.records()
    assert len(rows) == sum(sol.log.inner_counts)
    assert {"outer", "inner", "outer_lb", "outer_ub", "inner_lb", "inner_ub", "subproblem_cost", "u"} <= set(rows[0])


def test_outer_iteration_limit(toy3):
    with pytest.raises(NonConvergenceError) as info:
        solve_robust_tnep(toy3, max_outer=1, outer_tolerance=-1.0)
    assert info.value.partial is not None
    assert info.value.partial.log.outer_count == 1


def test_bad_z_mode(toy3):
    with pytest.raises(ValueError):
        solve_robust_tnep(toy3, z_mode="fixed")


def test_tight_dual_bounds_are_detected(toy3):
    # bounds that exclude the optimal duals make the inner master cut off the true worst case
    with pytest.raises(FormulationError):
        inner_loop(toy3, ExpansionPlan(), dual_bounds=(-1e-9, 1e-9))


def test_no_expansion_space():
    case = load_case(single_bus_doc())
    sol = solve_robust_tnep(case)
    assert not sol.plan.lines_built and not sol.plan.storage_built
    assert sol.capital_cost == 0
    assert sol.upper_bound == pytest.approx(50 * 24 * 365 * 30 * 1e-6)


def test_relaxed_mode_is_not_above_binary():
    case = relaxed_demo_case()
    b = solve_robust_tnep(case)
    r = solve_robust_tnep(case, z_mode=Z_RELAXED)
    assert r.upper_bound <= b.upper_bound + 1e-6


def test_monotone_checker_flags_violations():
    from robust_tnep.nested_ccg import InnerLog, OuterIteration

    def outer(i, lb, ub):
        return OuterIteration(i, lb, lb, ub, ExpansionPlan(), 0.0, 0.0, None, InnerLog(), 0.0)

    log = IterationLog([outer(1, 2.0, 5.0), outer(2, 1.0, 6.0)])
    bad = log.check_monotone()
    assert "outer LB decreased" in bad and "outer UB increased" in bad
