"""Critical population size and cumulation parameter between step-size divergence and convergence.

A single verdict simulates the full (delta, p, sigma) recursion until
|ln(sigma_t / sigma_0)| crosses a bound; the searches bisect on those verdicts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .es_core import AlgoParams
from .markov_lab import _draw_chunk, make_rng
from .problem import ProblemGeometry
from .scalar_math import NumericError

DIVERGED = "diverged"
CONVERGED = "converged"
INDETERMINATE = "indeterminate"

DEFAULT_MAX_STEPS = 10**6
C_BRACKET = (1e-4, 1.0)
LAMBDA_CAP = 10**4

_EMPTY = np.empty(0)


class BoundaryNotFound(NumericError):
    pass


@dataclass(frozen=True)
class ThresholdVerdict:
    outcome: str
    steps_used: int
    final_log_sigma: float

    @property
    def diverged(self) -> bool:
        """Direction used by the searches; an indeterminate run counts by the sign of ln sigma."""
        if self.outcome == INDETERMINATE:
            return self.final_log_sigma > 0.0
        return self.outcome == DIVERGED


def run_until_threshold(geom: ProblemGeometry, params: AlgoParams, bound: float,
                        max_steps: int = DEFAULT_MAX_STEPS, seed: int = 0,
                        rng: Optional[np.random.Generator] = None,
                        delta0: float = 1.0) -> ThresholdVerdict:
    if not bound > 0:
        raise ValueError("bound must be > 0")
    rng = rng if rng is not None else make_rng(seed)
    p1, p2 = rng.standard_normal(2)
    delta, log_sigma = float(delta0), 0.0
    used, chunk = 0, 1024
    while used < max_steps:
        m = min(chunk, max_steps - used)
        us, zs, ks = _draw_chunk(rng, m, params.lam, geom.dim)
        done, delta, p1, p2, log_sigma = _kernels.run_csa(
            delta, p1, p2, log_sigma, us, zs, ks, geom.cos, geom.sin, params.c,
            params.d_sigma, float(geom.dim), float(bound), False,
            _EMPTY, _EMPTY, _EMPTY, _EMPTY, _EMPTY)
        used += done
        if abs(log_sigma) >= bound:
            return ThresholdVerdict(DIVERGED if log_sigma > 0 else CONVERGED, used, log_sigma)
        chunk = min(chunk * 2, 1 << 16)
    return ThresholdVerdict(INDETERMINATE, used, log_sigma)


@dataclass(frozen=True)
class TraceEntry:
    theta: float
    tested: float
    outcome: str
    steps_used: int
    final_log_sigma: float


@dataclass
class BoundaryResult:
    value: float
    lower: float
    upper: float
    flag: Optional[str] = None
    trace: list[TraceEntry] = field(default_factory=list)

    @property
    def bracket_width(self) -> float:
        return abs(self.upper - self.lower)


def _float_key(x: float) -> int:
    return int(np.float64(x).view(np.uint64))


def _verdict(geom, params, bound, max_steps, seed, key, replicates, trace, tested):
    """Majority verdict over ``replicates`` independent runs; every run is traced."""
    votes = 0
    for r in range(replicates):
        v = run_until_threshold(geom, params, bound, max_steps, rng=make_rng(seed, key, r))
        trace.append(TraceEntry(geom.theta, tested, v.outcome, v.steps_used, v.final_log_sigma))
        votes += 1 if v.diverged else -1
    return votes > 0


def lambda_crit(theta: float, c: float, d_sigma: float = 1.0, bound: Optional[float] = None,
                seed: int = 0, n: int = 2, replicates: int = 1,
                max_steps: int = DEFAULT_MAX_STEPS, lam_cap: int = LAMBDA_CAP) -> BoundaryResult:
    """Smallest lambda whose run diverges.

    The upper end grows by doubling from 2 until a run diverges, then integer
    bisection keeps the lower end converged and the upper end diverged.
    ``bound`` defaults to 100 for c = 1 and 20 otherwise.
    """
    geom = ProblemGeometry(theta, n)
    if bound is None:
        bound = 100.0 if c == 1.0 else 20.0
    trace: list[TraceEntry] = []

    def diverges(lam):
        params = AlgoParams(lam=lam, c=c, d_sigma=d_sigma)
        return _verdict(geom, params, bound, max_steps, seed, lam, replicates, trace, lam)

    lo, hi = 1, 2
    while not diverges(hi):
        lo, hi = hi, 2 * hi
        if hi > lam_cap:
            raise BoundaryNotFound(f"no diverging lambda up to {lam_cap} at theta={theta:g}, c={c:g}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if diverges(mid):
            hi = mid
        else:
            lo = mid
    flag = "at_lower_end" if hi == 2 else None
    return BoundaryResult(float(hi), float(lo), float(hi), flag, trace)


def c_crit(theta: float, lam: int, d_sigma: float = 1.0, bound: Optional[float] = None,
           seed: int = 0, n: int = 2, replicates: int = 1,
           max_steps: int = DEFAULT_MAX_STEPS, bracket: tuple[float, float] = C_BRACKET,
           bound_factor: float = 1000.0) -> BoundaryResult:
    """Largest cumulation parameter that still diverges, to within theta^2 / 10.

    Runs stop when |ln sigma| exceeds ``bound_factor * sqrt(c)`` unless a fixed
    ``bound`` is given. Small c diverges, so the lower bracket end always diverged
    and the upper end always converged.
    """
    geom = ProblemGeometry(theta, n)
    precision = max(theta * theta / 10.0, 1e-6)
    trace: list[TraceEntry] = []

    def diverges(c):
        params = AlgoParams(lam=lam, c=c, d_sigma=d_sigma)
        b = bound if bound is not None else bound_factor * math.sqrt(c)
        return _verdict(geom, params, b, max_steps, seed, _float_key(c), replicates, trace, c)

    lo, hi = bracket
    if diverges(hi):
        return BoundaryResult(hi, hi, hi, "all_diverge", trace)
    if not diverges(lo):
        return BoundaryResult(lo, lo, lo, "all_converge", trace)
    while hi - lo > precision:
        mid = 0.5 * (lo + hi)
        if diverges(mid):
            lo = mid
        else:
            hi = mid
    return BoundaryResult(0.5 * (lo + hi), lo, hi, None, trace)
