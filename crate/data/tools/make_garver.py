"""Writes data/garver6.json.

Topology, reactances, ratings and relative build costs are the classic Garver
6-bus data. Build costs are scaled to M EUR by COST_SCALE. Generator and load
prices are placeholders (see data/PROVENANCE.md).
"""
import json
import pathlib

COST_SCALE = 27.031 / 140.0 * 1e6  # EUR per classic cost unit

# corridor: (x p.u., rating MW, classic cost, existing circuits)
CORRIDORS = {
    (1, 2): (0.40, 100, 40, 1),
    (1, 3): (0.38, 100, 38, 0),
    (1, 4): (0.60, 80, 60, 1),
    (1, 5): (0.20, 100, 20, 1),
    (1, 6): (0.68, 70, 68, 0),
    (2, 3): (0.20, 100, 20, 1),
    (2, 4): (0.40, 100, 40, 1),
    (2, 5): (0.31, 100, 31, 0),
    (2, 6): (0.30, 100, 30, 0),
    (3, 4): (0.59, 82, 59, 0),
    (3, 5): (0.20, 100, 20, 1),
    (3, 6): (0.48, 100, 48, 0),
    (4, 5): (0.63, 75, 63, 0),
    (4, 6): (0.30, 100, 30, 0),
    (5, 6): (0.61, 78, 61, 0),
}
CANDIDATES_PER_CORRIDOR = 3

# final-period nominal values; bus, MW, EUR/MWh
GENERATORS = [(1, 150.0, 10.0), (3, 360.0, 8.0), (6, 600.0, 5.0)]
DEMANDS = [(1, 80.0, 40.0), (2, 240.0, 42.0), (3, 40.0, 38.0), (4, 160.0, 45.0), (5, 240.0, 44.0)]
GEN_DEV = 0.5
DEM_DEV = 0.2
FIRST_YEAR_SHARE = 0.75
GROWTH = 0.012


def main():
    lines = []
    for (a, b), (x, cap, _, n) in CORRIDORS.items():
        for k in range(n):
            lines.append(dict(id=0, from_bus=a, to_bus=b, susceptance=100.0 / x, capacity_mw=cap,
                              status="existing", name=f"{a}-{b} existing"))
    for (a, b), (x, cap, cost, _) in CORRIDORS.items():
        for k in range(CANDIDATES_PER_CORRIDOR):
            lines.append(dict(id=0, from_bus=a, to_bus=b, susceptance=100.0 / x, capacity_mw=cap,
                              status="candidate", build_cost_eur=round(cost * COST_SCALE, 3),
                              name=f"{a}-{b} #{k + 1}"))
    for i, l in enumerate(lines):
        l["id"] = i + 1

    doc = dict(
        name="garver6",
        provenance="Garver 6-bus system, see data/PROVENANCE.md",
        buses=[dict(id=i, is_slack=(i == 1)) for i in range(1, 7)],
        lines=lines,
        generators=[dict(id=i + 1, bus=b, cost_eur_per_mwh=c) for i, (b, _, c) in enumerate(GENERATORS)],
        demands=[dict(id=i + 1, bus=b, shed_cost_eur_per_mwh=c) for i, (b, _, c) in enumerate(DEMANDS)],
        horizon=dict(n_periods=25, discount_rate=0.10, sigma_hours=8760.0, budget_eur=40e6),
        uncertainty=dict(
            base=dict(
                generators=[dict(id=i + 1, nominal_mw=FIRST_YEAR_SHARE * p, deviation_mw=FIRST_YEAR_SHARE * GEN_DEV * p)
                            for i, (_, p, _) in enumerate(GENERATORS)],
                demands=[dict(id=i + 1, nominal_mw=FIRST_YEAR_SHARE * p, deviation_mw=FIRST_YEAR_SHARE * DEM_DEV * p)
                         for i, (_, p, _) in enumerate(DEMANDS)],
            ),
            growth=dict(annual_rate=GROWTH),
            gamma_g=2,
            gamma_d=2,
        ),
    )
    out = pathlib.Path(__file__).resolve().parents[1] / "garver6.json"
    out.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {out} ({len(lines)} lines)")


if __name__ == "__main__":
    main()
