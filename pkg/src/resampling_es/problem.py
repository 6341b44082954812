"""Linear objective with one linear constraint, and the laws of feasible and selected steps.

Coordinates: ``f(x) = x[0]`` is maximised subject to
``g(x) = -x[0] cos(theta) - x[1] sin(theta) > 0``. Everything that depends on the
step distribution lives in the plane of the first two coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .scalar_math import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    integrate,
    std_normal_cdf,
    std_normal_pdf,
)


@dataclass(frozen=True)
class ProblemGeometry:
    theta: float
    dim: int = 2

    def __post_init__(self):
        if not 0.0 < self.theta < math.pi / 2:
            raise ValueError(f"theta must lie in (0, pi/2), got {self.theta!r}")
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dim must be an integer >= 2, got {self.dim!r}")
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def cos(self) -> float:
        return math.cos(self.theta)

    @property
    def sin(self) -> float:
        return math.sin(self.theta)

    @property
    def normal(self) -> np.ndarray:
        """Unit normal n = -grad g, pointing out of the feasible half-space."""
        return np.array([self.cos, self.sin])

    @property
    def normal_perp(self) -> np.ndarray:
        return np.array([-self.sin, self.cos])

    @property
    def rotation(self) -> np.ndarray:
        """Rotation by theta; maps (e1, e2) to (n, n_perp)."""
        c, s = self.cos, self.sin
        return np.array([[c, -s], [s, c]])

    def from_constraint_frame(self, along_normal, along_perp) -> np.ndarray:
        """Map coordinates in the (n, n_perp) frame back to (e1, e2)."""
        a = np.asarray(along_normal, dtype=float)
        z = np.asarray(along_perp, dtype=float)
        return np.stack([a * self.cos - z * self.sin, a * self.sin + z * self.cos], axis=-1)

    def padded_normal(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[:2] = self.normal
        return out


def fitness(x) -> float:
    return float(np.asarray(x, dtype=float)[0])


def constraint_value(geom: ProblemGeometry, x) -> float:
    """g(x); the point is feasible iff the value is strictly positive."""
    x = np.asarray(x, dtype=float)
    return float(-x[0] * geom.cos - x[1] * geom.sin)


def is_feasible(geom: ProblemGeometry, x) -> bool:
    return constraint_value(geom, x) > 0.0


def _check_delta(delta):
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta!r}")


def feasible_step_density(geom: ProblemGeometry, delta: float, v):
    """Joint density of a feasible (resampled) step at normalized distance ``delta``."""
    _check_delta(delta)
    v = np.asarray(v, dtype=float)
    inside = (delta - (v[..., 0] * geom.cos + v[..., 1] * geom.sin)) > 0.0
    dens = std_normal_pdf(v[..., 0]) * std_normal_pdf(v[..., 1]) / std_normal_cdf(delta)
    return np.where(inside, dens, 0.0)


def feasible_first_marginal(geom: ProblemGeometry, delta: float, x):
    """Density of the first coordinate of a feasible step."""
    _check_delta(delta)
    x = np.asarray(x, dtype=float)
    return (std_normal_pdf(x) * std_normal_cdf((delta - x * geom.cos) / geom.sin)
            / std_normal_cdf(delta))


# Cumulative table of the feasible first-coordinate density. Knots are spaced _H
# apart on [_LO, _HI]; each cell and each partial cell is integrated with
# Gauss-Legendre, exact to rounding for this smooth integrand.
_LO, _HI, _H = -12.0, 12.0, 1.0 / 32.0
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@lru_cache(maxsize=128)
def _first_cdf_table(theta: float, delta: float) -> np.ndarray:
    geom = ProblemGeometry(theta)
    knots = np.arange(_LO, _HI + 0.5 * _H, _H)
    mid = 0.5 * (knots[:-1] + knots[1:])
    pts = mid[:, None] + 0.5 * _H * _GL_NODES[None, :]
    cells = 0.5 * _H * (feasible_first_marginal(geom, delta, pts) @ _GL_WEIGHTS)
    table = np.concatenate([[_lower_tail(geom, delta, _LO)], cells]).cumsum()
    table.setflags(write=False)
    return table


def _lower_tail(geom, delta, x):
    # Phi((delta - u cos)/sin) is decreasing in u, so on (-inf, x] it lies within
    # [value at x, 1]; the resulting bracket is far below double precision for x <= -12
    return std_normal_cdf(x) * std_normal_cdf((delta - x * geom.cos) / geom.sin) / std_normal_cdf(delta)


def feasible_first_cdf(geom: ProblemGeometry, delta: float, x):
    """CDF of the first coordinate of a feasible step (F_{1,delta})."""
    _check_delta(delta)
    table = _first_cdf_table(geom.theta, float(delta))
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, _LO, _HI)
    k = np.minimum(np.floor((xc - _LO) / _H).astype(int), len(table) - 2)
    left = _LO + k * _H
    half = 0.5 * (xc - left)
    pts = (left + half)[..., None] + half[..., None] * _GL_NODES
    partial = half * (feasible_first_marginal(geom, delta, pts) @ _GL_WEIGHTS)
    out = table[k] + partial
    out = np.where(x < _LO, _lower_tail(geom, delta, x), out)
    out = np.where(x > _HI, 1.0, out)
    return np.clip(out, 0.0, 1.0)


def selected_step_density(geom: ProblemGeometry, delta: float, lam: int, v):
    """Joint density of the selected step among ``lam`` feasible candidates."""
    v = np.asarray(v, dtype=float)
    base = feasible_step_density(geom, delta, v)
    if lam == 1:
        return base
    return lam * base * feasible_first_cdf(geom, delta, v[..., 0]) ** (lam - 1)


def selected_first_marginal(geom: ProblemGeometry, delta: float, lam: int, x):
    x = np.asarray(x, dtype=float)
    return (lam * feasible_first_marginal(geom, delta, x)
            * feasible_first_cdf(geom, delta, x) ** (lam - 1))


def selected_first_cdf(geom: ProblemGeometry, delta: float, lam: int, x):
    """CDF of the selected first coordinate: the maximum of ``lam`` i.i.d. copies."""
    return feasible_first_cdf(geom, delta, x) ** lam


def selected_second_marginal(geom: ProblemGeometry, delta: float, lam: int, y,
                             spec: QuadratureSpec = DEFAULT_QUADRATURE):
    """Density of the second coordinate of the selected step, by quadrature over x."""
    _check_delta(delta)
    c, s = geom.cos, geom.sin
    phi_delta = float(std_normal_cdf(delta))

    def one(yv):
        upper = (delta - yv * s) / c
        inner = integrate(
            lambda u: float(std_normal_pdf(u) * feasible_first_cdf(geom, delta, u) ** (lam - 1)),
            -math.inf, upper, spec)
        return lam * float(std_normal_pdf(yv)) / phi_delta * inner

    y_arr = np.asarray(y, dtype=float)
    if y_arr.ndim == 0:
        return one(float(y_arr))
    return np.array([one(float(t)) for t in y_arr.ravel()]).reshape(y_arr.shape)


def selected_marginals(geom: ProblemGeometry, delta: float, lam: int):
    """Return the two marginal densities of the selected step as callables."""
    _check_delta(delta)

    def first(x):
        return selected_first_marginal(geom, delta, lam, x)

    def second(y):
        return selected_second_marginal(geom, delta, lam, y)

    return first, second
