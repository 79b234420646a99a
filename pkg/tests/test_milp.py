import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_tnep import milp
from robust_tnep.milp import BINARY, ModelBuilder, SolverConfig, StandardFormError, extract_standard_form, solve


def test_continuous_lower_bound():
    mb = ModelBuilder()
    x = mb.add_var(-milp.INF, milp.INF)
    mb.add_constraint([x], [1.0], ">=", 3.0)
    mb.set_objective([x], [1.0])
    res = solve(mb)
    assert res.optimal
    assert res.objective == pytest.approx(3.0)


def test_binary_knapsack():
    mb = ModelBuilder(sense="max")
    a = mb.add_var(0, 1, BINARY)
    b = mb.add_var(0, 1, BINARY)
    mb.add_constraint([a, b], [1.0, 1.0], "<=", 1.0)
    mb.set_objective([a, b], [3.0, 2.0])
    res = solve(mb)
    assert res.objective == pytest.approx(3.0)
    assert res.values[a] == pytest.approx(1.0)


def test_infeasible_status():
    mb = ModelBuilder()
    x = mb.add_var(-milp.INF, milp.INF)
    mb.add_constraint([x], [1.0], ">=", 1.0)
    mb.add_constraint([x], [1.0], "<=", 0.0)
    mb.set_objective([x], [1.0])
    res = solve(mb)
    assert res.status == milp.INFEASIBLE
    assert res.values is None


def test_unbounded_status():
    mb = ModelBuilder()
    x = mb.add_var(-milp.INF, milp.INF)
    mb.set_objective([x], [1.0])
    assert solve(mb).status in (milp.UNBOUNDED, milp.INFEASIBLE)


def test_unknown_backend():
    mb = ModelBuilder()
    mb.set_objective([mb.add_var()], [1.0])
    with pytest.raises(milp.BackendUnavailableError):
        solve(mb, SolverConfig(backend="nope"))


def test_scipy_backend_agrees():
    mb = ModelBuilder(sense="max")
    a = mb.add_var(0, 1, BINARY)
    b = mb.add_var(0, 4)
    mb.add_constraint([a, b], [2.0, 1.0], "<=", 4.5)
    mb.set_objective([a, b], [3.0, 1.0])
    h = solve(mb, SolverConfig(backend="highs"))
    s = solve(mb, SolverConfig(backend="scipy"))
    assert h.objective == pytest.approx(s.objective)


def test_parameters_shift_rhs():
    mb = ModelBuilder()
    x = mb.add_var()
    p = mb.add_param(0.0)
    mb.add_constraint([x], [1.0], ">=", 2.0, params=[(p, 5.0)])
    mb.set_objective([x], [1.0])
    assert solve(mb).objective == pytest.approx(2.0)
    mb.set_param(p, 1.0)
    assert solve(mb).objective == pytest.approx(7.0)


def test_standard_form_equality_row():
    mb = ModelBuilder()
    y1, y2 = mb.add_var(-milp.INF, milp.INF), mb.add_var(-milp.INF, milp.INF)
    mb.add_constraint([y1, y2], [1.0, 1.0], "==", 1.0)
    mb.set_objective([y1], [1.0])
    f = extract_standard_form(mb)
    assert f.E.toarray().tolist() == [[1.0, 1.0]]
    assert f.r0.tolist() == [1.0]
    assert f.F.shape[0] == 0


def test_standard_form_bound_row():
    mb = ModelBuilder()
    y = mb.add_var(0.0, milp.INF)
    mb.set_objective([y], [1.0])
    f = extract_standard_form(mb)
    assert f.F.toarray().tolist() == [[1.0]]
    assert f.s0.tolist() == [0.0]
    assert f.E.shape[0] == 0


def test_standard_form_rejects_binaries():
    mb = ModelBuilder()
    mb.add_var(0, 1, BINARY)
    with pytest.raises(StandardFormError):
        extract_standard_form(mb)


def test_resolve_is_deterministic():
    rng = np.random.default_rng(3)
    mb = ModelBuilder(sense="max")
    xs = mb.add_vars(8, 0, 1, BINARY)
    mb.add_constraint(list(xs), list(rng.uniform(1, 5, 8)), "<=", 9.0)
    mb.set_objective(list(xs), list(rng.uniform(1, 5, 8)))
    a, b = solve(mb), solve(mb)
    assert a.status == b.status
    assert a.objective == b.objective


@given(
    c=st.lists(st.floats(0.1, 5.0), min_size=3, max_size=3),
    rhs=st.floats(1.0, 10.0),
)
def test_lp_duality_by_standard_form(c, rhs):
    # min c.y  s.t.  sum y >= rhs, 0 <= y <= 4; the dual of the extracted form has the same optimum
    mb = ModelBuilder()
    ys = mb.add_vars(3, 0.0, 4.0)
    mb.add_constraint(list(ys), [1.0] * 3, ">=", rhs)
    mb.set_objective(list(ys), c)
    primal = solve(mb)
    f = extract_standard_form(mb)
    dual = ModelBuilder(sense="max")
    mu = dual.add_vars(f.F.shape[0], 0.0, milp.INF)
    Ft = f.F.T.toarray()
    for j in range(3):
        dual.add_constraint(list(mu), list(Ft[j]), "==", f.c[j])
    dual.set_objective(list(mu), list(f.s0))
    assert solve(dual).objective == pytest.approx(primal.objective, abs=1e-6)
