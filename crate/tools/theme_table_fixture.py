"""Builds a record-level fixture whose theme tables render the target
marginals exactly.

Output: crates/core/tests/fixtures/theme_tables.csv with one row per
(stance, decade, theme pair) cell and its record count. Solved as a small
integer feasibility problem with scipy's MILP solver.
"""
import itertools
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

THEMES = ["T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8"]
# papers, percent, neutral, ptlds, cld (taxonomy order)
THEME_TABLE = {
    "T1": (579, 56.1, 11.7, 49.4, 38.9),
    "T2": (530, 51.3, 77.0, 16.2, 6.8),
    "T3": (365, 35.3, 20.8, 40.5, 38.6),
    "T4": (192, 18.6, 28.1, 62.5, 9.4),
    "T5": (196, 19.0, 61.7, 21.4, 16.8),
    "T6": (149, 14.4, 82.6, 8.1, 9.4),
    "T7": (25, 2.4, 76.0, 24.0, 0.0),
    "T8": (30, 2.9, 10.0, 0.0, 90.0),
}
# 2000s, 2010s, 2020s
DECADE_TABLE = {
    "T1": (33, 28, 24),
    "T2": (21, 25, 29),
    "T3": (20, 20, 14),
    "T4": (10, 8, 10),
    "T5": (11, 8, 11),
    "T6": (3, 8, 10),
    "T7": (1, 1, 2),
    "T8": (1, 2, 1),
}
RECORDS = 1033
# each theme's stance split is pinned by its rounded percentages, and the
# splits fix the records per stance: 436 / 350 / 247 (42.2 / 33.9 / 23.9 %)
STANCE_RECORDS = {"Neutral": 436, "Supports PTLDS": 350, "Supports CLD": 247}
STANCES = list(STANCE_RECORDS)
DECADES = [2000, 2010, 2020]


def r1(x):
    # round half away from zero at one decimal, matching Rust's {:.1} on these values
    return float(f"{x:.1f}")


def stance_options(t):
    papers, _, n_pct, p_pct, c_pct = THEME_TABLE[t]
    out = []
    for n in range(papers + 1):
        for p in range(papers + 1 - n):
            c = papers - n - p
            if (r1(100 * n / papers), r1(100 * p / papers), r1(100 * c / papers)) == (n_pct, p_pct, c_pct):
                out.append((n, p, c))
    return out


def main():
    assert sum(v[0] for v in THEME_TABLE.values()) == 2 * RECORDS
    for t, (papers, pct, *_ ) in THEME_TABLE.items():
        assert r1(100 * papers / RECORDS) == pct, t
    options = {t: stance_options(t) for t in THEMES}
    for t, o in options.items():
        assert o, f"no stance split for {t}"
    for s, name in enumerate(STANCES):
        assert sum(options[t][0][s] for t in THEMES) == 2 * STANCE_RECORDS[name], name

    pairs = list(itertools.combinations(range(len(THEMES)), 2))
    cells = [(s, d, pr) for s in range(3) for d in range(3) for pr in pairs]
    # theme-by-stance split choice variables
    choice = [(t, k) for t in range(len(THEMES)) for k in range(len(options[THEMES[t]]))]
    # decade slot counts per theme and decade record totals
    nd = len(cells) + len(choice)
    n_theme_dec = len(THEMES) * 3
    nvar = nd + n_theme_dec + 3
    rows, lo, hi = [], [], []

    def add(row, l, h):
        rows.append(row)
        lo.append(l)
        hi.append(h)

    # one split per theme
    for t in range(len(THEMES)):
        row = np.zeros(nvar)
        for j, (tt, k) in enumerate(choice):
            if tt == t:
                row[len(cells) + j] = 1
        add(row, 1, 1)
    # stance slots per theme match the chosen split
    for t in range(len(THEMES)):
        for s in range(3):
            row = np.zeros(nvar)
            for i, (cs, d, pr) in enumerate(cells):
                if cs == s and t in pr:
                    row[i] = 1
            for j, (tt, k) in enumerate(choice):
                if tt == t:
                    row[len(cells) + j] = -options[THEMES[t]][k][s]
            add(row, 0, 0)
    # records per stance
    for s in range(3):
        row = np.zeros(nvar)
        for i, (cs, d, pr) in enumerate(cells):
            if cs == s:
                row[i] = 1
        add(row, STANCE_RECORDS[STANCES[s]], STANCE_RECORDS[STANCES[s]])
    # theme-decade slots
    tdv = lambda t, d: nd + t * 3 + d
    rdv = lambda d: nd + n_theme_dec + d
    for t in range(len(THEMES)):
        for d in range(3):
            row = np.zeros(nvar)
            for i, (cs, cd, pr) in enumerate(cells):
                if cd == d and t in pr:
                    row[i] = 1
            row[tdv(t, d)] = -1
            add(row, 0, 0)
    for d in range(3):
        row = np.zeros(nvar)
        for i, (cs, cd, pr) in enumerate(cells):
            if cd == d:
                row[i] = 1
        row[rdv(d)] = -1
        add(row, 0, 0)
        # share of theme t in decade d rounds to the target integer:
        # (v - 0.5) * 2R <= 100 * x <= (v + 0.5) * 2R, with a small margin
        for t in range(len(THEMES)):
            v = DECADE_TABLE[THEMES[t]][d]
            row = np.zeros(nvar)
            row[tdv(t, d)] = 100
            row[rdv(d)] = -(v - 0.499) * 2
            add(row, 0, np.inf)
            row = np.zeros(nvar)
            row[tdv(t, d)] = 100
            row[rdv(d)] = -(v + 0.499) * 2
            add(row, -np.inf, 0)
    # at least a plausible spread of records per decade
    for d, minimum in zip(range(3), (100, 100, 100)):
        row = np.zeros(nvar)
        row[rdv(d)] = 1
        add(row, minimum, np.inf)

    ub = np.full(nvar, np.inf)
    ub[len(cells):nd] = 1
    res = milp(
        c=np.zeros(nvar),
        constraints=LinearConstraint(np.array(rows), lo, hi),
        integrality=np.ones(nvar),
        bounds=Bounds(np.zeros(nvar), ub),
    )
    if not res.success:
        sys.exit(f"infeasible: {res.message}")
    x = np.round(res.x).astype(int)

    out = Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures/theme_tables.csv"
    lines = ["stance,decade,theme_a,theme_b,records"]
    for i, (s, d, (a, b)) in enumerate(cells):
        if x[i]:
            lines.append(f"{STANCES[s]},{DECADES[d]},{THEMES[a]},{THEMES[b]},{x[i]}")
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines) - 1} cells, decade records {[x[rdv(d)] for d in range(3)]}")


if __name__ == "__main__":
    main()
