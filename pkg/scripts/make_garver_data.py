"""Regenerate the bundled Garver case and its synthetic hourly data.

The measured profiles behind the original study are not public, so a
seeded synthetic year stands in for them. Run from the repository root.
"""
import json
from pathlib import Path

from robust_tnep.clustering import build_representative_days, synthetic_year
from robust_tnep.system import write_hourly_csv

DATA = Path(__file__).resolve().parents[1] / "src" / "robust_tnep" / "data"
K = 10
SEED = 0

# from, to, reactance p.u., capacity MW, circuit cost 10^3 EUR
LINES = [
    (1, 2, 0.40, 100, 7723.20), (1, 3, 0.38, 100, 7337.04), (1, 4, 0.60, 80, 11584.80),
    (1, 5, 0.20, 100, 3861.60), (1, 6, 0.68, 70, 13129.44), (2, 3, 0.20, 80, 3861.60),
    (2, 4, 0.40, 100, 7723.20), (2, 5, 0.31, 100, 5985.48), (2, 6, 0.30, 100, 5792.40),
    (3, 4, 0.59, 82, 11391.72), (3, 5, 0.20, 70, 3861.60), (3, 6, 0.48, 100, 9267.84),
    (4, 5, 0.63, 75, 12164.04), (4, 6, 0.30, 100, 5792.40), (5, 6, 0.61, 78, 11777.88),
]
EXISTING = {(1, 2), (1, 4), (1, 5), (2, 3), (2, 4), (3, 5)}


def main():
    year = synthetic_year()
    year.to_csv(DATA / "garver_history.csv")
    days = build_representative_days(year, K, SEED)
    write_hourly_csv(
        DATA / "garver_days.csv",
        {f"rd{i + 1:02d}": {**d.demand_factor, **d.wind_cf} for i, d in enumerate(days)},
    )
    doc = {
        "name": "garver-6bus",
        "base_mva": 100.0,
        "buses": [{"id": 1, "is_reference": True}] + [{"id": i} for i in range(2, 7)],
        "generators": [
            {"id": "G1", "bus": 1, "technology": "conventional", "nominal_capacity": 150.0, "operating_cost": 60.0},
            {"id": "G3", "bus": 3, "technology": "conventional", "nominal_capacity": 350.0, "operating_cost": 65.0},
            {"id": "G6", "bus": 6, "technology": "conventional", "nominal_capacity": 500.0, "operating_cost": 70.0},
            {"id": "W3", "bus": 3, "technology": "wind", "nominal_capacity": 400.0, "operating_cost": 0.0,
             "profile": "wind"},
        ],
        "corridors": [
            {"from_bus": i, "to_bus": j, "reactance": x, "capacity": float(c),
             "existing_count": int((i, j) in EXISTING), "max_total_count": 3, "circuit_capital_cost": cost}
            for i, j, x, c, cost in LINES
        ],
        "storage": [
            {"id": "S3", "bus": 3, "status": "existing", "max_energy": 100.0, "initial_energy": 1.0,
             "charge_cap": 20.0, "discharge_cap": 20.0, "charge_eff": 0.82, "discharge_eff": 1.0},
            {"id": "S6", "bus": 6, "status": "candidate", "max_energy": 200.0, "initial_energy": 2.0,
             "charge_cap": 40.0, "discharge_cap": 40.0, "charge_eff": 0.82, "discharge_eff": 1.0,
             "max_buildable": 3, "unit_capital_cost": 10000.0},
        ],
        "demands": [
            {"id": f"D{b}", "bus": b, "nominal_level": lvl, "shed_cost": cost, "profile": "load"}
            for b, lvl, cost in [(1, 100.0, 11250.0), (2, 300.0, 11500.0), (3, 50.0, 12000.0),
                                 (4, 200.0, 11000.0), (5, 300.0, 11200.0)]
        ],
        "representative_days": {"csv": "garver_days.csv", "weights": [d.weight for d in days]},
        "economics": {"amortization_rate": 0.11, "investment_budget": 60000.0,
                      "outer_tolerance": 1e-6, "inner_tolerance": 1e-6},
        "uncertainty": {"budget_demand": 0, "budget_conventional": 0, "budget_wind": 0,
                        "demand_deviation": 0.2, "gen_deviation": 0.5, "wind_deviation": 0.5},
    }
    (DATA / "garver.json").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
