"""Published reference values for the standard grid (D=1, L=pi, mu=1/sqrt(2)).

Keys are ``(sigma_bar, n)``. ``TABLE_TAU`` holds the cycle length tau and
``TABLE_K`` the measured flux/density constant, both as printed (4 decimals).
"""
from __future__ import annotations

SIGMA_BARS = (30, 100, 200)
N_VALUES = (200, 400, 600, 800, 1000, 1500, 3000, 5000, 10000)

_TAU_ROWS = {
    30: (0.0865, 0.0431, 0.0287, 0.0215, 0.0172, 0.0115, 0.0057, 0.0034, 0.0017),
    100: (0.1579, 0.0787, 0.0524, 0.0393, 0.0314, 0.0210, 0.0105, 0.0063, 0.0031),
    200: (0.2233, 0.1114, 0.0742, 0.0556, 0.0445, 0.0296, 0.0148, 0.0089, 0.0044),
}

_K_ROWS = {
    30: (0.8660, 0.8140, 0.7916, 0.7794, 0.7723, 0.7624, 0.7476, 0.7371, 0.7351),
    100: (1.0059, 0.9099, 0.8772, 0.8559, 0.8430, 0.8245, 0.8017, 0.7906, 0.7772),
    200: (1.1135, 0.9738, 0.9269, 0.8994, 0.8852, 0.8564, 0.8280, 0.8155, 0.7944),
}

TABLE_TAU = {(sb, n): v for sb, row in _TAU_ROWS.items() for n, v in zip(N_VALUES, row)}
TABLE_K = {(sb, n): v for sb, row in _K_ROWS.items() for n, v in zip(N_VALUES, row)}

#: printed value of 2*mu*sqrt(D/pi) at the standard constants
HOMOGENIZED_K_PRINTED = 0.798
