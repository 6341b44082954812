"""Compiled chain loops.

Every loop consumes pre-drawn randomness (``us`` in (0, 1], ``zs`` standard normal,
``ks`` chi-squared) so that the caller owns the random stream. Per-step outputs
are written into caller-supplied arrays; the state at the end is returned.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .scalar_math import _trunc_quantile


@numba.njit(cache=True, nogil=True)
def select(delta, us, zs, cos, sin):
    """Selected step among the candidates; returns (g1, g2, g.n, index)."""
    best = -np.inf
    best_a = 0.0
    best_i = 0
    for i in range(us.shape[0]):
        a = _trunc_quantile(delta, us[i])
        g1 = a * cos - zs[i] * sin
        if g1 > best:
            best = g1
            best_a = a
            best_i = i
    g2 = best_a * sin + zs[best_i] * cos
    return best, g2, best_a, best_i


@numba.njit(cache=True, nogil=True)
def run_constant(delta, us, zs, cos, sin, sign, out_delta, out_g1, out_g2, out_gn):
    # sign = +1 is the correct update; -1 exists only to mutation-test the checks
    for t in range(us.shape[0]):
        g1, g2, gn, _ = select(delta, us[t], zs[t], cos, sin)
        out_delta[t] = delta
        out_g1[t] = g1
        out_g2[t] = g2
        out_gn[t] = gn
        delta = delta - sign * gn
    return delta


@numba.njit(cache=True, nogil=True)
def run_csa(delta, p1, p2, log_sigma, us, zs, ks, cos, sin, c, d_sigma, n, bound,
            store, out_delta, out_g1, out_g2, out_gn, out_log_eta):
    """(delta, p, log sigma) recursion; stops early once |log sigma| >= bound.

    Returns (steps_done, delta, p1, p2, log_sigma).
    """
    keep = 1.0 - c
    mix = math.sqrt(c * (2.0 - c))
    scale = c / (2.0 * d_sigma)
    steps = us.shape[0]
    for t in range(steps):
        g1, g2, gn, _ = select(delta, us[t], zs[t], cos, sin)
        p1 = keep * p1 + mix * g1
        p2 = keep * p2 + mix * g2
        log_eta = scale * ((p1 * p1 + p2 * p2 + ks[t]) / n - 1.0)
        if store:
            out_delta[t] = delta
            out_g1[t] = g1
            out_g2[t] = g2
            out_gn[t] = gn
            out_log_eta[t] = log_eta
        delta = (delta - gn) * math.exp(-log_eta)
        log_sigma += log_eta
        if abs(log_sigma) >= bound:
            return t + 1, delta, p1, p2, log_sigma
    return steps, delta, p1, p2, log_sigma


@numba.njit(cache=True, nogil=True)
def run_csa_c1(delta, log_sigma, us, zs, ks, cos, sin, d_sigma, n,
               out_delta, out_g1, out_g2, out_gn, out_log_eta):
    """delta-only recursion for c = 1, where the path equals the selected step."""
    scale = 1.0 / (2.0 * d_sigma)
    for t in range(us.shape[0]):
        g1, g2, gn, _ = select(delta, us[t], zs[t], cos, sin)
        log_eta = scale * ((g1 * g1 + g2 * g2 + ks[t]) / n - 1.0)
        out_delta[t] = delta
        out_g1[t] = g1
        out_g2[t] = g2
        out_gn[t] = gn
        out_log_eta[t] = log_eta
        delta = (delta - gn) * math.exp(-log_eta)
        log_sigma += log_eta
    return delta, log_sigma
