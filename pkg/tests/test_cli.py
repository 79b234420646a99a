import csv
import json

import pytest

from robust_tnep import cli
from robust_tnep.clustering import two_regime_series

TIMING = set(cli.TIMING_KEYS)


def _strip(obj):
    if isinstance(obj, dict):
        return {k: _strip(v) for k, v in obj.items() if k not in TIMING}
    if isinstance(obj, list):
        return [_strip(v) for v in obj]
    return obj


def _run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr().out


def test_solve_json_stdout(capsys):
    code, out = _run(["solve", "--case", "toy_3bus"], capsys)
    assert code == cli.EXIT_OK
    doc = json.loads(out)
    assert doc["converged"] is True
    assert doc["storage_modes"] == "binary"
    assert doc["budgets"] == {"demand": 1, "conventional": 1, "wind": 1}
    assert doc["iterations"]
    assert all(line.startswith("new ") for line in doc["summary"])


def test_solve_is_deterministic(capsys):
    a = json.loads(_run(["solve", "--case", "toy_3bus", "--gamma-d", "2"], capsys)[1])
    b = json.loads(_run(["solve", "--case", "toy_3bus", "--gamma-d", "2"], capsys)[1])
    assert _strip(a) == _strip(b)


def test_solve_csv_with_sidecar_and_plot(tmp_path):
    out = tmp_path / "run.csv"
    assert cli.main(["solve", "--case", "toy_2bus", "--out", str(out), "--plot"]) == cli.EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1 and rows[0]["converged"] == "True"
    assert (tmp_path / "run.iterations.csv").exists()
    assert (tmp_path / "run_convergence.png").stat().st_size > 0


def test_relax_z_reports_simultaneous_hours(capsys):
    code, out = _run(["solve", "--case", "relaxed_demo", "--relax-z"], capsys)
    doc = json.loads(out)
    assert code == cli.EXIT_OK
    assert doc["storage_modes"] == "relaxed"
    assert doc["simultaneous_hours"] >= 1


def test_missing_case_is_parse_error(tmp_path):
    assert cli.main(["solve", "--case", str(tmp_path / "none.json")]) == cli.EXIT_PARSE


def test_budget_out_of_range_is_validation_error():
    assert cli.main(["solve", "--case", "toy_3bus", "--gamma-d", "7"]) == cli.EXIT_VALIDATION


def test_outer_limit_exit_code():
    code = cli.main(["solve", "--case", "toy_3bus", "--max-outer", "1", "--tol-outer", "1e-12"])
    assert code == cli.EXIT_NONCONVERGENCE


def test_bad_budget_triplet():
    with pytest.raises(SystemExit) as info:
        cli.main(["sweep", "--case", "toy_3bus", "--budgets", "1,2"])
    assert info.value.code == 2


def test_sweep_budgets_csv(capsys):
    code, out = _run(["sweep", "--case", "toy_3bus", "--budgets", "0,0,0", "1,1,1", "9,0,0"], capsys)
    rows = list(csv.DictReader(out.splitlines()))
    assert [r["budgets"] for r in rows] == ["0,0,0", "1,1,1", "9,0,0"]
    assert rows[2]["error"]
    assert float(rows[0]["total_annual_cost_kEUR"]) <= float(rows[1]["total_annual_cost_kEUR"])
    assert code == cli.EXIT_SOLVER


def test_sweep_k_axis(tmp_path):
    series = tmp_path / "h.csv"
    two_regime_series(n_a=20, n_b=16, hours=4).to_csv(series)
    out = tmp_path / "k.json"
    code = cli.main(["sweep", "--case", "toy_3bus", "--k", "1-3", "--series", str(series), "--out", str(out),
                     "--plot"])
    assert code == cli.EXIT_OK
    rows = json.loads(out.read_text())
    assert [r["K"] for r in rows] == [1, 2, 3]
    assert rows[1]["total_annual_cost_kEUR"] == rows[2]["total_annual_cost_kEUR"]
    assert (tmp_path / "k_sweep.png").exists()


def test_cluster_csv(tmp_path):
    series = tmp_path / "h.csv"
    two_regime_series(n_a=20, n_b=16, hours=3).to_csv(series)
    out = tmp_path / "days.csv"
    assert cli.main(["cluster", "--series", str(series), "-k", "2", "--out", str(out), "--plot"]) == cli.EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6
    weights = {r["day"]: float(r["weight"]) for r in rows}
    assert sum(weights.values()) == pytest.approx(365.0)
    assert (tmp_path / "days_days.png").exists()


def test_cluster_bad_series(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("day,hour,load\nd1,1,0.5\nd1,2,0.4\nd2,1,0.3\n")
    assert cli.main(["cluster", "--series", str(p), "-k", "1"]) in (cli.EXIT_PARSE, cli.EXIT_VALIDATION)


def test_verify_toy(capsys):
    code, out = _run(["verify", "--instances", "toy", "--format", "json"], capsys)
    doc = json.loads(out)
    assert code == cli.EXIT_OK
    assert doc["passed"] and len(doc["rows"]) >= 6
