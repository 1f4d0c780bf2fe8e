"""Regenerate the bundled synthetic grid fixtures.

case5   -- slack EHV bus feeding a small meshed HV grid through one transformer.
case34  -- EHV slack bus 0 coupled to three EHV buses (1-3), each feeding a
           30-node meshed 110 kV grid (buses 4..33) through one transformer.

Usage: python scripts/make_fixtures.py  (writes into src/flexagg/data/)
"""
import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "flexagg" / "data"


def bus(index, kind="load", p=0.0, q=0.0, g=0.0, b=0.0):
    return {"index": index, "kind": kind, "p_mw": p, "q_mvar": q, "shunt_g_pu": g, "shunt_b_pu": b}


def line(f, t, km, i_max=6.0):
    # 110 kV overhead line, 100 MVA base (Z_base = 121 ohm)
    return {"from": f, "to": t, "r_pu": round(0.12 * km / 121, 6), "x_pu": round(0.39 * km / 121, 6),
            "b_shunt_pu": round(2.9e-6 * km * 121, 6), "i_max_pu": i_max}


def case5():
    buses = [bus(0, "slack"), bus(1), bus(2, p=-60, q=-15), bus(3, p=25, q=-5), bus(4, p=-40, q=-10)]
    branches = [
        {"from": 1, "to": 0, "r_pu": 0.001, "x_pu": 0.04, "b_shunt_pu": 0.0, "i_max_pu": 5.0},
        line(1, 2, 20), line(1, 3, 25), line(2, 3, 15), line(3, 4, 20), line(2, 4, 30),
    ]
    flex = [
        {"bus": 3, "dp_min_mw": -25, "dp_max_mw": 0, "dq_min_mvar": -15, "dq_max_mvar": 15},
        {"bus": 4, "dp_min_mw": -10, "dp_max_mw": 0, "dq_min_mvar": -10, "dq_max_mvar": 10},
    ]
    return {"base_power_mva": 100.0, "buses": buses, "branches": branches, "interconnections": [0],
            "flexibilities": flex, "limits": {"v_min_pu": 0.9, "v_max_pu": 1.1,
                                               "delta_min_rad": -math.pi / 2, "delta_max_rad": math.pi / 2}}


def case34():
    hv = lambda k: 3 + k  # HV node k (1..30) -> bus index
    # net injections per HV node (MW, Mvar); DER-rich nodes inject active power,
    # every node exports reactive power (cable-rich underlying grids)
    injections = {
        1: (-35, 8), 2: (40, 0), 3: (-25, 6), 4: (30, 2), 5: (-45, 12), 6: (20, 0),
        7: (-30, 7), 8: (35, 3), 9: (-20, 5), 10: (-40, 10), 11: (25, 0), 12: (-15, 4),
        13: (45, 2), 14: (-30, 8), 15: (-10, 3), 16: (30, 0), 17: (-35, 9), 18: (20, 1),
        19: (-25, 6), 20: (40, 2), 21: (-30, 7), 22: (-20, 5), 23: (35, 0), 24: (-40, 11),
        25: (25, 1), 26: (-30, 8), 27: (30, 0), 28: (-15, 4), 29: (-10, 2), 30: (20, 3),
    }
    buses = [bus(0, "slack"), bus(1), bus(2), bus(3)]
    for k in range(1, 31):
        p, q = injections[k]
        buses.append(bus(hv(k), p=p, q=q))

    branches = [
        # EHV couplings to the slack (EHV 4)
        {"from": 1, "to": 0, "r_pu": 0.0002, "x_pu": 0.004, "b_shunt_pu": 0.0, "i_max_pu": 20.0},
        {"from": 2, "to": 0, "r_pu": 0.0003, "x_pu": 0.005, "b_shunt_pu": 0.0, "i_max_pu": 20.0},
        {"from": 3, "to": 0, "r_pu": 0.0002, "x_pu": 0.0045, "b_shunt_pu": 0.0, "i_max_pu": 20.0},
        # vertical interconnections, HV side first: HV15-EHV1, HV12-EHV2, HV29-EHV3
        {"from": hv(15), "to": 1, "r_pu": 0.0008, "x_pu": 0.04, "b_shunt_pu": 0.0, "i_max_pu": 6.0},
        {"from": hv(12), "to": 2, "r_pu": 0.0008, "x_pu": 0.04, "b_shunt_pu": 0.0, "i_max_pu": 6.0},
        {"from": hv(29), "to": 3, "r_pu": 0.0008, "x_pu": 0.04, "b_shunt_pu": 0.0, "i_max_pu": 6.0},
    ]
    # region A around HV15: 1..10, region B around HV12: 11..20 , region C around HV29: 21..30
    hv_lines = [
        (15, 1, 12), (15, 2, 18), (15, 3, 15), (1, 4, 20), (2, 5, 22), (3, 6, 16), (4, 7, 14),
        (5, 8, 18), (6, 9, 20), (7, 10, 25),
        (12, 11, 14), (12, 13, 16), (12, 14, 20), (11, 16, 18), (13, 17, 22), (14, 18, 15),
        (16, 19, 20), (17, 20, 24),
        (29, 21, 12), (29, 22, 18), (29, 23, 16), (21, 24, 20), (22, 25, 22), (23, 26, 14),
        (24, 27, 18), (25, 28, 20), (26, 30, 22),
        # ties between regions and inner loops
        (10, 11, 35), (9, 20, 40), (20, 27, 38), (30, 8, 45), (2, 3, 20), (13, 14, 18), (22, 23, 16),
    ]
    for f, t, km in hv_lines:
        branches.append(line(hv(f), hv(t), km))
    flex = []
    for k, dq in ((2, 25), (4, 20), (8, 20), (13, 25), (16, 20), (20, 15), (23, 25), (25, 20), (27, 15)):
        p = injections[k][0]
        flex.append({"bus": hv(k), "dp_min_mw": -round(0.6 * p, 3), "dp_max_mw": 0.0,
                     "dq_min_mvar": -dq, "dq_max_mvar": dq})
    return {"base_power_mva": 100.0, "buses": buses, "branches": branches,
            "interconnections": [3, 4, 5], "flexibilities": flex,
            "limits": {"v_min_pu": 0.9, "v_max_pu": 1.1,
                       "delta_min_rad": -math.pi / 2, "delta_max_rad": math.pi / 2}}


def overload(case, factor):
    out = json.loads(json.dumps(case))
    for b in out["buses"]:
        b["p_mw"] *= factor
        b["q_mvar"] *= factor
    return out


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    c5 = case5()
    for name, data in (("case5", c5), ("case5_overload", overload(c5, 50.0)), ("case34", case34())):
        (OUT / f"{name}.json").write_text(json.dumps(data, indent=2) + "\n")


if __name__ == "__main__":
    main()
