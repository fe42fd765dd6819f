#!/usr/bin/env python3
"""Regenerate src/fedwagg/_poly_constants.py.

Least-squares cubic fits on 1000 uniform nodes for the three nonlinearities
replaced by polynomials inside the encrypted evaluation.  Run from the repo
root after changing intervals or targets; the output file is committed so
every build shares identical coefficients.
"""

import pathlib

import numpy as np

INTERVAL = (-6.0, 6.0)
NODES = 1000
DENSE = 10001

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "fedwagg" / "_poly_constants.py"


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def neg_log_sigmoid(x):
    return np.logaddexp(0.0, -x)


def fit(target, odd_about_half: bool):
    lo, hi = INTERVAL
    xs = np.linspace(lo, hi, NODES)
    ys = target(xs)
    if odd_about_half:
        basis = np.stack([np.ones_like(xs), xs, xs**3], axis=1)
        c, *_ = np.linalg.lstsq(basis, ys, rcond=None)
        coeffs = (float(c[0]), float(c[1]), 0.0, float(c[2]))
    else:
        basis = np.stack([np.ones_like(xs), xs, xs**2, xs**3], axis=1)
        c, *_ = np.linalg.lstsq(basis, ys, rcond=None)
        coeffs = tuple(float(v) for v in c)
    dense = np.linspace(lo, hi, DENSE)
    approx = coeffs[0] + coeffs[1] * dense + coeffs[2] * dense**2 + coeffs[3] * dense**3
    max_error = float(np.max(np.abs(approx - target(dense))))
    return coeffs, max_error


def main():
    rows = []
    for name, target, odd in [
        ("SIGMOID_CUBIC", sigmoid, True),
        ("NEG_LOG_SIGMOID_CUBIC", neg_log_sigmoid, False),
        ("NEG_LOG_ONE_MINUS_SIGMOID_CUBIC", lambda x: neg_log_sigmoid(-x), False),
    ]:
        coeffs, max_error = fit(target, odd)
        rows.append((name, coeffs, max_error))

    lines = [
        '"""Frozen cubic coefficients for the encrypted-evaluation polynomials.',
        "",
        "Generated by scripts/fit_poly_constants.py; edit that script, not this",
        'file.  Each entry is (s0, s1, s2, s3, lo, hi, max_error_on_dense_grid)."""',
        "",
    ]
    for name, coeffs, max_error in rows:
        lines.append(f"{name} = (")
        for c in coeffs:
            lines.append(f"    {c!r},")
        lines.append(f"    {INTERVAL[0]!r},")
        lines.append(f"    {INTERVAL[1]!r},")
        lines.append(f"    {max_error!r},")
        lines.append(")")
        lines.append("")
    OUT.write_text("\n".join(lines))
    for name, coeffs, max_error in rows:
        print(f"{name}: {coeffs} max_error={max_error:.6f}")


if __name__ == "__main__":
    main()
