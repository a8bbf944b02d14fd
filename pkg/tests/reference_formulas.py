"""Straight-line reference for the delay and energy formulas.

Written without importing the package. Every quantity is evaluated in exact
rational arithmetic from the float inputs; only the final comparison converts
back to float. Rounding to TTIs follows the package's documented rule: round
up, except that a value within 1e-9 (relative) of an integer counts as that
integer.
"""

import math
from fractions import Fraction as F

SNAP = F(1, 10**9)


def ttis(seconds, tti):
    x = F(seconds) / F(tti)
    n = round(x)
    if abs(x - n) <= SNAP * max(1, abs(x)):
        return int(n)
    return math.ceil(x)


def upload_s(c, r_up):
    return F(c) / F(r_up)


def vec_compute_s(c, kappa, share, f_vec):
    return F(kappa) * F(c) / (F(share) * F(f_vec))


def download_s(c, omega, r_down):
    return F(omega) * F(c) / F(r_down)


def offload_ttis(kind, c, kappa, omega, r_up, r_down, share, f_vec, tti):
    n = ttis(upload_s(c, r_up), tti) + ttis(vec_compute_s(c, kappa, share, f_vec), tti)
    if kind == "LPA":
        n += ttis(download_s(c, omega, r_down), tti)
    return n


def local_ttis(c, kappa, f_local, tti):
    return ttis(F(kappa) * F(c) / F(f_local), tti)


def offload_energy(kind, c, omega, r_up, r_down, p_tx):
    air = F(c) / F(r_up)
    if kind == "LPA":
        air += F(omega) * F(c) / F(r_down)
    return F(p_tx) * air


def local_energy(c, kappa, xi, f_local):
    return F(xi) * F(kappa) * F(c) * F(f_local) ** 2


def hpa_threshold(v, thr2, v_max):
    # exponent rewritten as 1.96^2 (1 - v^2 / v_max^2) / 2
    z = 1.96**2 * (1.0 - (v * v) / (v_max * v_max)) / 2.0
    return thr2 * math.exp(z)
