#!/usr/bin/env python3
"""Writes the bundled benchmark networks into data/.

Both feeders are reconstructions from published aggregates, not the
original data sets. Output is deterministic.
"""

import argparse
import json
import math
import random
from pathlib import Path

BASE_KVA = 50.0
BASE_VOLT_LN = 230.0


def cable(length_km, r_phase, r_neutral, x_self, x_mutual):
    """Kron-reduced 3x3 impedance of a four-wire cable, ohm.

    The primitive 4x4 matrix carries x_self on the diagonal and x_mutual
    between conductors; eliminating the neutral gives the phase model.
    """
    prim = [[complex(0.0, x_mutual) for _ in range(4)] for _ in range(4)]
    for i in range(3):
        prim[i][i] = complex(r_phase, x_self)
    prim[3][3] = complex(r_neutral, x_self)
    z = [[(prim[i][j] - prim[i][3] * prim[3][j] / prim[3][3]) * length_km for j in range(3)] for i in range(3)]
    return [[round(v.real, 6) for v in row] for row in z], [[round(v.imag, 6) for v in row] for row in z]


# Per-km primitive data (r_phase, r_neutral, x_self, x_mutual) of a 4x95 mm2 Al
# main cable and a 4x35 mm2 Al service cable.
MAIN = (0.32, 0.32, 0.80, 0.72)
SERVICE = (0.87, 0.87, 0.82, 0.73)


def line(frm, to, length_km, kind=MAIN, rating=None):
    zr, zi = cable(length_km, *kind)
    return {"from": frm, "to": to, "z_real": zr, "z_imag": zi, "s_rating": rating}


def round3(v):
    return [round(x, 4) for x in v]


def simple5():
    buses = [{"id": "0", "vmin": 0.9, "vmax": 1.1}]
    buses += [{"id": str(i), "vmin": 0.9, "vmax": 1.1} for i in range(1, 6)]
    lines = [
        line("0", "1", 0.14),
        line("1", "2", 0.22),
        line("1", "3", 0.10),
        line("3", "4", 0.26),
        line("3", "5", 0.085),
    ]
    # kW per phase; totals 31.3775 / 19.9675 / 30.155 = 81.5 kW (38.5/24.5/37 %).
    p = {
        "2": [13.0, 8.4675, 8.0],
        "3": [5.0, 5.0, 5.0],
        "4": [8.3775, 1.5, 12.155],
        "5": [5.0, 5.0, 5.0],
    }
    q_ratio = {"2": 0.35, "3": 0.33, "4": 0.30, "5": 0.33}
    loads = [{"bus": b, "p": v, "q": round3([x * q_ratio[b] for x in v])} for b, v in p.items()]
    gens = [
        {"bus": "0", "phases": "abc", "pmin": [None] * 3, "pmax": [None] * 3, "qmin": [None] * 3,
         "qmax": [None] * 3, "cost": 1.0, "is_substation": True},
        {"bus": "3", "phases": "abc", "pmin": [0.0] * 3, "pmax": [7.0] * 3, "qmin": [-6.0] * 3,
         "qmax": [6.0] * 3, "cost": 0.0, "is_substation": False, "balanced": True},
    ]
    for k, ph in enumerate("abc"):
        pmax = [0.0, 0.0, 0.0]
        pmax[k] = 2.5
        gens.append({"bus": "4", "phases": ph, "pmin": [0.0] * 3, "pmax": pmax, "qmin": [0.0] * 3,
                     "qmax": [0.0] * 3, "cost": 0.0, "is_substation": False})
    return {
        "name": "simple5",
        "note": "reconstructed from published aggregates; per-bus loads and impedances are not original data",
        "base_kva": BASE_KVA,
        "base_volt_ln": BASE_VOLT_LN,
        "buses": buses,
        "lines": lines,
        "loads": loads,
        "gens": gens,
        "unbalance": {"mode": "none", "limit_pct": 1.0, "penalty": 1.0, "penalty_on": "f",
                      "buses": ["1", "2", "3", "4", "5"]},
    }


# 117-node European LV feeder. Published aggregates: 55 load buses, 287.5 kW
# split 38.3 / 32.9 / 28.8 % over phases a / b / c, three 18 kW motors at
# pf 0.88 on buses 9, 23 and 40, single-phase loads of 3.5 to 5.5 kW at pf
# 0.93, DER2 (54 kVA, +-30 kvar, free), DER1 and DER3 (60 kVA, +-54 kvar,
# 1.1 EUR/kWh) and fourteen 7.5 kW single-phase rooftop PV units.
EU_TOTAL_KW = 287.5
EU_SHARE = (0.383, 0.329, 0.288)
EU_MOTORS = ("9", "23", "40")
EU_MOTOR_KW = 18.0
EU_SINGLE_COUNT = (20, 17, 15)


def _pf_q(p_kw, pf):
    return p_kw * math.sqrt(1.0 / (pf * pf) - 1.0)


def _spread(rng, count, total, lo=3.5, hi=5.5):
    """`count` values in [lo, hi] summing to `total`."""
    vals = [rng.uniform(lo, hi) for _ in range(count)]
    for _ in range(200):
        gap = total - sum(vals)
        if abs(gap) < 1e-9:
            break
        free = [i for i, v in enumerate(vals) if (lo < v < hi) or (gap > 0 and v <= lo) or (gap < 0 and v >= hi)]
        for i in free:
            vals[i] = min(hi, max(lo, vals[i] + gap / len(free)))
    return [round(v, 4) for v in vals[:-1]] + [round(total - sum(round(v, 4) for v in vals[:-1]), 4)]


def eulv117(seed=117):
    rng = random.Random(seed)
    n = 117
    parent = [None] + [0] * (n - 1)
    for i in range(2, n):
        parent[i] = i - 1 if rng.random() < 0.5 else rng.randrange(max(1, i - 20), i - 1)
    children = {i: [] for i in range(n)}
    for i in range(1, n):
        children[parent[i]].append(i)
    leaves = [i for i in range(1, n) if not children[i]]

    buses = [{"id": str(i), "vmin": 0.9, "vmax": 1.1} for i in range(n)]
    lines = []
    for i in range(1, n):
        trunk = len(children[i]) > 0
        length = rng.uniform(0.004, 0.011) if trunk else rng.uniform(0.006, 0.015)
        lines.append(line(str(parent[i]), str(i), round(length, 4), MAIN if trunk else SERVICE))

    motor_ids = {int(b) for b in EU_MOTORS}
    candidates = sorted(set(range(2, n)) - motor_ids)
    rng.shuffle(candidates)
    # Leaves first so most loads sit at the feeder ends.
    candidates.sort(key=lambda b: 0 if b in leaves else 1)
    single = sorted(candidates[: sum(EU_SINGLE_COUNT)])
    rng.shuffle(single)

    loads = [{"bus": b, "p": [EU_MOTOR_KW] * 3, "q": round3([_pf_q(EU_MOTOR_KW, 0.88)] * 3)} for b in EU_MOTORS]
    start = 0
    for ph, count in enumerate(EU_SINGLE_COUNT):
        total = EU_TOTAL_KW * EU_SHARE[ph] - EU_MOTOR_KW * len(EU_MOTORS)
        for b, kw in zip(single[start : start + count], _spread(rng, count, total)):
            p = [0.0, 0.0, 0.0]
            q = [0.0, 0.0, 0.0]
            p[ph] = kw
            q[ph] = round(_pf_q(kw, 0.93), 4)
            loads.append({"bus": str(b), "p": p, "q": q})
        start += count
    loads.sort(key=lambda ld: int(ld["bus"]))

    gens = [{"bus": "0", "phases": "abc", "pmin": [None] * 3, "pmax": [None] * 3, "qmin": [None] * 3,
             "qmax": [None] * 3, "cost": 1.0, "is_substation": True}]
    ders = {"DER1": ("30", 20.0, 18.0, 1.1), "DER2": ("62", 18.0, 10.0, 0.0), "DER3": ("95", 20.0, 18.0, 1.1)}
    for name, (bus, pmax, qmax, cost) in ders.items():
        gens.append({"name": name, "bus": bus, "phases": "abc", "pmin": [0.0] * 3, "pmax": [pmax] * 3,
                     "qmin": [-qmax] * 3, "qmax": [qmax] * 3, "cost": cost, "is_substation": False,
                     "balanced": True})
    # Rooftop PV on load buses, weighted toward the lightly loaded phases.
    load_buses = [int(ld["bus"]) for ld in loads if ld["bus"] not in EU_MOTORS]
    pv_buses = sorted(rng.sample(load_buses, 14))
    pv_phase = [1, 2, 2, 1, 2, 0, 2, 1, 2, 2, 1, 2, 0, 1]
    for b, ph in zip(pv_buses, pv_phase):
        pmax = [0.0, 0.0, 0.0]
        pmax[ph] = 7.5
        gens.append({"bus": str(b), "phases": "abc"[ph], "pmin": [0.0] * 3, "pmax": pmax, "qmin": [0.0] * 3,
                     "qmax": [0.0] * 3, "cost": 0.0, "is_substation": False})

    far = sorted(leaves, key=lambda b: -depth(parent, b))
    subset = sorted({*EU_MOTORS, *(str(b) for b in far[:12])}, key=int)
    return {
        "name": "eulv117",
        "note": "reconstructed from published aggregates; topology, impedances and per-bus loads are not original data",
        "base_kva": BASE_KVA,
        "base_volt_ln": BASE_VOLT_LN,
        "buses": buses,
        "lines": lines,
        "loads": loads,
        "gens": gens,
        "unbalance": {"mode": "none", "limit_pct": 1.0, "penalty": 1.0, "penalty_on": "f", "buses": subset},
    }


def depth(parent, b):
    d = 0
    while parent[b] is not None:
        b = parent[b]
        d += 1
    return d


def write(doc, path):
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    write(simple5(), args.out / "simple5.net.json")
    write(eulv117(), args.out / "eulv117.net.json")


if __name__ == "__main__":
    main()
