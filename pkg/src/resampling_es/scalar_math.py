"""Normal-distribution special functions, truncated quantiles and order-statistic moments.

The scalar kernels (``_pdf``, ``_cdf``, ``_quantile``, ``_trunc_quantile``) are
numba-compiled so the chain loops in :mod:`resampling_es._kernels` can call them
without leaving compiled code. The public names wrap them with argument checks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np
from scipy import integrate as _sp_integrate

_INV_SQRT_2PI = 0.3989422804014327
_SQRT1_2 = 0.7071067811865476

# Acklam's rational approximation of the normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


class NumericError(ArithmeticError):
    """A numerical routine failed to reach its requested accuracy."""


class QuadratureError(NumericError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved abs error ~ {achieved:.3g})")
        self.achieved = achieved


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be strictly positive")
        if int(self.max_subdivisions) != self.max_subdivisions or self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be a positive integer")


DEFAULT_QUADRATURE = QuadratureSpec()


@numba.njit(cache=True, nogil=True)
def _pdf(x):
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


@numba.njit(cache=True, nogil=True)
def _cdf(x):
    # erfc on the negative half keeps relative accuracy in the lower tail
    if x < 0.0:
        return 0.5 * math.erfc(-x * _SQRT1_2)
    return 1.0 - 0.5 * math.erfc(x * _SQRT1_2)


@numba.njit(cache=True, nogil=True)
def _quantile(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    for _ in range(2):
        dens = _pdf(x)
        if dens == 0.0:
            break
        if p < 0.5:
            err = _cdf(x) - p
        else:
            # Phi(x) - p written with upper-tail terms, both exact near p = 1
            err = (1.0 - p) - _cdf(-x)
        x -= err / dens
    return x


@numba.njit(cache=True, nogil=True)
def _trunc_quantile(delta, u):
    if u >= 1.0:
        return delta
    x = _quantile(u * _cdf(delta))
    # keep the strict support x < delta under rounding
    if x >= delta:
        x = np.nextafter(delta, -np.inf)
    return x


_pdf_ufunc = numba.vectorize(["float64(float64)"], cache=True)(_pdf.py_func)
_cdf_ufunc = numba.vectorize(["float64(float64)"], cache=True)(_cdf.py_func)
_trunc_ufunc = numba.vectorize(["float64(float64, float64)"], cache=True)(_trunc_quantile.py_func)


def std_normal_pdf(x):
    """Standard normal density; accepts scalars or arrays."""
    return _pdf_ufunc(x)


def std_normal_cdf(x):
    """Standard normal CDF, accurate to ~1e-16 absolute and relatively accurate in the lower tail."""
    return _cdf_ufunc(x)


def std_normal_quantile(p: float) -> float:
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"normal quantile needs 0 < p < 1, got {p!r}")
    return float(_quantile(p))


def truncated_normal_quantile(delta: float, u: float) -> float:
    """u-quantile of a standard normal conditioned on being below ``delta``.

    This is the generalized inverse of ``x -> min(1, Phi(x) / Phi(delta))``,
    i.e. ``Phi^-1(u * Phi(delta))``, with ``u = 1`` mapped to ``delta``.
    """
    delta, u = float(delta), float(u)
    if not delta > 0.0:
        raise ValueError(f"delta must be > 0, got {delta!r}")
    if not 0.0 < u <= 1.0:
        raise ValueError(f"u must lie in (0, 1], got {u!r}")
    return float(_trunc_quantile(delta, u))


def truncated_normal_quantiles(delta: float, u) -> np.ndarray:
    """Array version of :func:`truncated_normal_quantile` for many ``u``."""
    u = np.asarray(u, dtype=float)
    if not delta > 0.0:
        raise ValueError(f"delta must be > 0, got {delta!r}")
    if u.size and not (np.all(u > 0.0) and np.all(u <= 1.0)):
        raise ValueError("u must lie in (0, 1]")
    return _trunc_ufunc(float(delta), u)


def chi_squared_sample(dof: int, rng: np.random.Generator, size=None):
    """Draw from chi^2(dof).

    Small ``dof`` (<= 32) sums squared normals so that ``dof = 0`` gives exactly 0;
    larger ``dof`` uses numpy's gamma sampler with shape dof/2 and scale 2.
    """
    dof = int(dof)
    if dof < 0:
        raise ValueError("dof must be >= 0")
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    if dof == 0:
        out = np.zeros(shape)
    elif dof <= 32:
        z = rng.standard_normal(shape + (dof,))
        out = np.einsum("...i,...i->...", z, z)
    else:
        out = 2.0 * rng.standard_gamma(dof / 2.0, size=shape)
    return float(out) if size is None else out


def integrate(f: Callable[[float], float], a: float, b: float,
              spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Adaptive quadrature of ``f`` on ``[a, b]`` (infinite limits allowed)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _sp_integrate.IntegrationWarning)
        res = _sp_integrate.quad(f, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
                                 limit=spec.max_subdivisions, full_output=1)
    value, abserr = res[0], res[1]
    if len(res) > 3 and res[3] and abserr > max(spec.abs_tol, spec.rel_tol * abs(value)):
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {res[3]}", abserr)
    if not math.isfinite(value):
        raise QuadratureError(f"quadrature on [{a}, {b}] produced {value}", abserr)
    return value


def orderstat_density(lam: int, x):
    """Density of the maximum of ``lam`` i.i.d. standard normals."""
    x = np.asarray(x, dtype=float)
    return lam * _pdf_ufunc(x) * _cdf_ufunc(x) ** (lam - 1)


def orderstat_moment(lam: int, k: int, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """E[N_{lam:lam}^k], the k-th raw moment of the largest of ``lam`` standard normals."""
    if lam < 1 or k < 1:
        raise ValueError("lam and k must be positive")
    return integrate(lambda x: x ** k * lam * _pdf(x) * _cdf(x) ** (lam - 1),
                     -math.inf, math.inf, spec)


def orderstat_exp_moment(lam: int, a: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """E[exp(a N_{lam:lam})].

    Uses exp(a x) phi(x) = exp(a^2/2) phi(x - a) and integrates over y = x - a,
    which keeps the integrand bounded for any ``a``.
    """
    if lam < 1:
        raise ValueError("lam must be positive")
    a = float(a)
    inner = integrate(lambda y: lam * _pdf(y) * _cdf(y + a) ** (lam - 1), -math.inf, math.inf, spec)
    return math.exp(0.5 * a * a) * inner
