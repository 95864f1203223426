"""Regenerates the bundled 33-bus grid files in data/."""
import json
import math
import os

LINES = [(1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864), (4, 5, 0.3811, 0.1941),
         (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188), (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400),
         (9, 10, 1.0440, 0.7400), (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
         (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450), (16, 17, 1.2890, 1.7210),
         (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565), (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784),
         (21, 22, 0.7089, 0.9373), (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
         (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337), (28, 29, 0.8042, 0.7006),
         (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630), (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302)]
LOADS = {2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20), 7: (200, 100), 8: (200, 100),
         9: (60, 20), 10: (60, 20), 11: (45, 30), 12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10),
         16: (60, 20), 17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40), 22: (90, 40),
         23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25), 27: (60, 25), 28: (60, 20), 29: (120, 70),
         30: (200, 600), 31: (150, 70), 32: (210, 100), 33: (60, 40)}
WC = 2 * math.pi * 60
VLL_KV = 12.66
VDC = 800.0


def evcs(bus, rating, bi=False):
    # 50 kW reference design scaled with the station rating
    s = rating / 50.0
    return {"bus": bus, "rating_kw": rating, "directional": "bi" if bi else "uni",
            "i_lower_a": -rating * 1e3 / VDC if bi else 0.0,
            "params": {"L_g": 2e-3 / s, "L_c": 2e-3 / s, "C_f": 30e-6 * s, "C_dc": 5600e-6 * s,
                       "v_dc_star": VDC, "kP1": 1.71, "kI1": 672.66, "kP2": 0.5 * s, "kI2": 5.0 * s,
                       "kP3": 25.0 / s, "kI3": 500.0 / s, "kP4": 25.0 / s, "kI4": 500.0 / s,
                       "turns_ratio": VLL_KV / 0.4}}


def grid(stations):
    ev_buses = {e["bus"] for e in stations}
    buses = [{"id": 1, "kind": "PCC", "p_load_kw": 0.0, "q_load_kvar": 0.0}]
    for b in range(2, 34):
        p, q = LOADS[b]
        buses.append({"id": b, "kind": "EV" if b in ev_buses else "Load", "p_load_kw": p, "q_load_kvar": q})
    lines = [{"from": f, "to": t, "r_ohm": r, "l_henry": x / WC} for f, t, r, x in LINES]
    return {"omega_bar_rad_s": 1.0, "omega_c_rad_s": WC, "v_pcc_kv": VLL_KV,
            "buses": buses, "lines": lines, "evcs": stations}


def main():
    here = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")
    out = {
        "ieee33.json": grid([]),
        "ieee33_p3.json": grid([evcs(3, 50), evcs(19, 50), evcs(5, 100)]),
        "ieee33_p10.json": grid([evcs(3, 50), evcs(5, 100), evcs(9, 100), evcs(11, 175, True),
                                 evcs(15, 150, True), evcs(17, 175, True), evcs(19, 50), evcs(21, 100),
                                 evcs(26, 50), evcs(32, 100)]),
    }
    for name, g in out.items():
        with open(os.path.join(here, name), "w") as fh:
            json.dump(g, fh, indent=1)
            fh.write("\n")


if __name__ == "__main__":
    main()
