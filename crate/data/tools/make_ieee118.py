"""Writes data/ieee118.json from the MATPOWER/PYPOWER case118 tables.

Usage: python3 make_ieee118.py /path/to/pypower/case118.py

The source case has no thermal ratings, prices for loads, or build costs;
the rules below fill them in (see data/PROVENANCE.md).
"""
import importlib.util
import json
import math
import pathlib
import sys

import numpy as np

# existing branches (1-based, case order) that may be duplicated once each
CANDIDATE_OF = [8, 12, 23, 32, 38, 41, 51, 68, 78, 96, 104, 118, 119, 121, 125, 129, 134, 159, 7, 9,
                36, 117, 71, 131, 133, 147, 103, 65, 144, 168, 4, 13, 132, 69, 66, 67, 5, 89, 29, 167,
                145, 70, 42, 90, 16, 174, 98, 99, 185, 93, 94, 128, 164, 97, 153, 146, 116, 163, 31, 92,
                130]

FINAL_SHARE = 2.0 / 3.0     # final-period nominal relative to the case data
DEVIATION = 0.5             # deviation relative to nominal, generation and demand
GROWTH = 0.0325
N_PERIODS = 10
RATING_MARGIN = 1.25        # rating = margin * |base-case flow|, rounded up
RATING_STEP = 10.0
RATING_MIN = 50.0
COST_FIXED_EUR = 2.0e6      # build cost = fixed + per_x * x
COST_PER_X_EUR = 60.0e6
SHED_MARKUP = 1.2


def load_case(path):
    spec = importlib.util.spec_from_file_location("case118", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod.case118()


def bid_price(bus):
    return 45.0 + 5.0 * (bus % 5)


def base_flows(ppc):
    """DC flows with every unit at the same share of Pmax, at final nominal values."""
    bus, gen, br = ppc["bus"], ppc["gen"], ppc["branch"]
    nb = bus.shape[0]
    idx = {int(b): i for i, b in enumerate(bus[:, 0])}
    pd = FINAL_SHARE * bus[:, 2]
    pmax = FINAL_SHARE * gen[:, 8]
    share = pd.sum() / pmax.sum()
    inj = -pd.copy()
    for g in range(gen.shape[0]):
        inj[idx[int(gen[g, 0])]] += share * pmax[g]
    B = np.zeros((nb, nb))
    for f, t, x in zip(br[:, 0], br[:, 1], br[:, 3]):
        i, j, b = idx[int(f)], idx[int(t)], 100.0 / x
        B[i, i] += b
        B[j, j] += b
        B[i, j] -= b
        B[j, i] -= b
    slack = [i for i in range(nb) if bus[i, 1] == 3][0]
    keep = [i for i in range(nb) if i != slack]
    theta = np.zeros(nb)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], inj[keep])
    return np.array([(theta[idx[int(f)]] - theta[idx[int(t)]]) * 100.0 / x
                     for f, t, x in zip(br[:, 0], br[:, 1], br[:, 3])]), slack


def rating(flow):
    return max(RATING_MIN, math.ceil(RATING_MARGIN * abs(flow) / RATING_STEP) * RATING_STEP)


def main(path):
    ppc = load_case(path)
    bus, gen, br, cost = ppc["bus"], ppc["gen"], ppc["branch"], ppc["gencost"]
    flows, slack = base_flows(ppc)
    first = FINAL_SHARE / (1.0 + GROWTH) ** (N_PERIODS - 1)

    lines = []
    for k in range(br.shape[0]):
        f, t, x = int(br[k, 0]), int(br[k, 1]), float(br[k, 3])
        lines.append(dict(id=k + 1, from_bus=f, to_bus=t, susceptance=round(100.0 / x, 6),
                          capacity_mw=rating(flows[k]), status="existing"))
    for n, k in enumerate(CANDIDATE_OF):
        e = lines[k - 1]
        x = float(br[k - 1, 3])
        lines.append(dict(id=len(br) + n + 1, from_bus=e["from_bus"], to_bus=e["to_bus"],
                          susceptance=e["susceptance"], capacity_mw=e["capacity_mw"], status="candidate",
                          build_cost_eur=round(COST_FIXED_EUR + COST_PER_X_EUR * x, 0),
                          name=f"dup {k}"))

    loads = [(int(b[0]), float(b[2])) for b in bus if b[2] > 0]
    gens = [(int(g[0]), float(g[8]), float(c[5])) for g, c in zip(gen, cost)]
    doc = dict(
        name="ieee118",
        provenance="IEEE 118-bus case (PYPOWER case118), see data/PROVENANCE.md",
        buses=[dict(id=int(b[0]), is_slack=(i == slack)) for i, b in enumerate(bus)],
        lines=lines,
        generators=[dict(id=i + 1, bus=b, cost_eur_per_mwh=c) for i, (b, _, c) in enumerate(gens)],
        demands=[dict(id=i + 1, bus=b, shed_cost_eur_per_mwh=SHED_MARKUP * bid_price(b))
                 for i, (b, _) in enumerate(loads)],
        horizon=dict(n_periods=N_PERIODS, discount_rate=0.10, sigma_hours=8760.0, budget_eur=100e6),
        uncertainty=dict(
            base=dict(
                generators=[dict(id=i + 1, nominal_mw=round(first * p, 6), deviation_mw=round(first * DEVIATION * p, 6))
                            for i, (_, p, _) in enumerate(gens)],
                demands=[dict(id=i + 1, nominal_mw=round(first * p, 6), deviation_mw=round(first * DEVIATION * p, 6))
                         for i, (_, p) in enumerate(loads)],
            ),
            growth=dict(annual_rate=GROWTH),
            gamma_g=15,
            gamma_d=20,
        ),
    )
    out = pathlib.Path(__file__).resolve().parents[1] / "ieee118.json"
    out.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {out}: {len(lines)} lines, {len(gens)} generators, {len(loads)} demands")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "case118.py")
