"""Frozen cubic coefficients for the encrypted-evaluation polynomials.

Generated by scripts/fit_poly_constants.py; edit that script, not this
file.  Each entry is (s0, s1, s2, s3, lo, hi, max_error_on_dense_grid)."""

SIGMOID_CUBIC = (
    0.49999999999999994,
    0.18050489917825666,
    0.0,
    -0.003085492951087836,
    -6.0,
    6.0,
    0.08096445920879791,
)

NEG_LOG_SIGMOID_CUBIC = (
    0.8396069006828784,
    -0.49999999999999967,
    0.06640246840467023,
    4.60901639381814e-19,
    -6.0,
    6.0,
    0.22762007811327822,
)

NEG_LOG_ONE_MINUS_SIGMOID_CUBIC = (
    0.8396069006828557,
    0.4999999999999998,
    0.06640246840467218,
    7.639851639291996e-18,
    -6.0,
    6.0,
    0.22762007811332463,
)
