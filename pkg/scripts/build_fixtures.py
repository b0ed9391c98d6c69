#!/usr/bin/env python3
"""Regenerate src/scatterlab/fixtures/*.json.

Oracle values are computed here in exact rational arithmetic by direct
summation and subset enumeration; nothing from scatterlab is imported.
"""
from __future__ import annotations

import itertools
import json
from fractions import Fraction as F
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "scatterlab" / "fixtures"


def mean(rows):
    n, p = len(rows), len(rows[0])
    return [sum(r[j] for r in rows) / n for j in range(p)]


def outer_avg(rows, weights=None, center=True, divisor=None):
    p = len(rows[0])
    mu = mean(rows) if center else [F(0)] * p
    weights = weights or [F(1)] * len(rows)
    divisor = divisor or len(rows)
    m = [[F(0)] * p for _ in range(p)]
    for r, w in zip(rows, weights):
        c = [r[j] - mu[j] for j in range(p)]
        for i in range(p):
            for j in range(p):
                m[i][j] += w * c[i] * c[j]
    return [[v / divisor for v in row] for row in m]


def det(m):
    if len(m) == 1:
        return m[0][0]
    if len(m) == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    return sum((-1) ** j * m[0][j] * det([row[:j] + row[j + 1:] for row in m[1:]]) for j in range(len(m)))


def inv2(m):
    if len(m) == 1:
        return [[1 / m[0][0]]]
    d = det(m)
    return [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]


def quad(v, m):
    return sum(v[i] * m[i][j] * v[j] for i in range(len(v)) for j in range(len(v)))


def cov4_raw(rows):
    c = outer_avg(rows)
    ci = inv2(c)
    mu = mean(rows)
    w = [quad([r[j] - mu[j] for j in range(len(r))], ci) for r in rows]
    return outer_avg(rows, weights=w)


def pair_table(rows):
    """All ordered differences x_i - x_j, the diagonal included."""
    p = len(rows[0])
    return [[a[j] - b[j] for j in range(p)] for a in rows for b in rows]


def symmetrized_cov(rows):
    m = outer_avg(pair_table(rows), center=False)
    return [[v / 2 for v in row] for row in m]


def mcd_enumeration(rows, h):
    table = []
    for idx in itertools.combinations(range(len(rows)), h):
        sub = [rows[i] for i in idx]
        table.append((det(outer_avg(sub)), list(idx)))
    best = min(table, key=lambda t: t[0])
    return best, table


def fl(m):
    if isinstance(m, list):
        return [fl(v) for v in m]
    return float(m)


def rational_rows(rows):
    return [[F(v) for v in r] for r in rows]


def write(name, rows, oracles, provenance, extra=None):
    doc = {
        "name": name,
        "version": 1,
        "sample": [[float(v) for v in r] for r in rows],
        "oracles": {k: fl(v) for k, v in oracles.items()},
        "provenance": provenance,
    }
    if extra:
        doc.update(extra)
    (OUT / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)

    rows = rational_rows([[1, 0], [-1, 0], [0, 1], [0, -1]])
    c = outer_avg(rows)
    write("cross4", rows, {
        "cov": c,
        "tyler": [[1, 0], [0, 1]],
        "t_m_raw": [[F(1, 2), 0], [0, F(1, 2)]],
        "cov4_raw": cov4_raw(rows),
        "symmetrized_cov": symmetrized_cov(rows),
    }, {
        "cov": "direct summation, divisor n",
        "tyler": "V = I satisfies V = (p/n) sum x x^T / (x^T V^-1 x) with trace p",
        "t_m_raw": "V = cI with c = (p + nu) / (2 (nu + 1/c)) gives c = 1/2 for every nu",
        "cov4_raw": "direct summation of x x^T (x^T Cov^-1 x) / n",
        "symmetrized_cov": "sum over all n^2 ordered differences / n^2, halved",
    })

    rows = rational_rows([[0], ["0.1"], ["0.2"], ["0.3"], [100], [-50]])
    (best_det, best_idx), table = mcd_enumeration(rows, 4)
    write("outlier1d", rows, {
        "cov": outer_avg(rows),
        "mcd_raw": [[best_det]],
        "symmetrized_cov": symmetrized_cov(rows),
    }, {
        "cov": "direct summation, divisor n",
        "mcd_raw": "enumeration of all C(6,4) subsets; determinant = variance with divisor h",
        "symmetrized_cov": "sum over all n^2 ordered differences / n^2, halved",
    }, extra={
        "mcd": {"h": 4, "alpha": 4 / 6, "support": best_idx,
                "subsets": [{"support": idx, "det": float(d)} for d, idx in table]},
    })

    rows = rational_rows([[1, 0], [0, 2], [-1, 1], [2, -1], [-2, -1], [0, -1]])
    raw = cov4_raw(rows)
    write("six2d", rows, {
        "cov": outer_avg(rows),
        "cov4_raw": raw,
        "cov4": [[v / 4 for v in row] for row in raw],
        "symmetrized_cov": symmetrized_cov(rows),
    }, {
        "cov": "direct summation, divisor n",
        "cov4_raw": "direct summation of x x^T (x^T Cov^-1 x) / n on centered rows",
        "cov4": "cov4_raw / (p + 2)",
        "symmetrized_cov": "sum over all n^2 ordered differences / n^2, halved",
    })

    rows = rational_rows([[0, 0], [1, 2], [3, 1], [-1, 4], [2, 2], [5, -1], [0, 3]])
    (best_det, best_idx), _ = mcd_enumeration(rows, 6)
    best = [rows[i] for i in best_idx]
    write("skew7", rows, {
        "cov": outer_avg(rows),
        "symmetrized_cov": symmetrized_cov(rows),
        "mcd_raw": outer_avg(best),
    }, {
        "cov": "direct summation, divisor n",
        "symmetrized_cov": "sum over all n^2 ordered differences / n^2, halved",
        "mcd_raw": "enumeration of all C(7,6) subsets, covariance of the minimum-determinant one",
    }, extra={"mcd": {"h": 6, "alpha": 6 / 7, "support": best_idx}})


if __name__ == "__main__":
    main()
