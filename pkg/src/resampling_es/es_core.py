"""The (1, lambda)-ES with resampling: feasible steps, selection and chain transitions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .problem import ProblemGeometry
from .scalar_math import (
    NumericError,
    chi_squared_sample,
    std_normal_cdf,
    truncated_normal_quantile,
    truncated_normal_quantiles,
)

INVERSE_CDF = "inverse_cdf"
REJECTION = "rejection"


class StepSizeOverflow(NumericError):
    """sigma left the representable range; ``direction`` is +1 (diverged) or -1 (converged)."""

    def __init__(self, direction: int, t: int):
        word = "diverged" if direction > 0 else "converged"
        super().__init__(f"step-size {word} beyond floating point range at step {t}")
        self.direction = direction
        self.t = t


class ResamplingLimitError(NumericError):
    pass


@dataclass(frozen=True)
class StepSample:
    u: float
    z: float

    def __post_init__(self):
        if not 0.0 < self.u <= 1.0:
            raise ValueError(f"u must lie in (0, 1], got {self.u!r}")


@dataclass(frozen=True)
class SampleBlock:
    """Randomness for one iteration: lambda (u, z) pairs and the chi^2(n-2) aggregate."""

    us: np.ndarray
    zs: np.ndarray
    k: float = 0.0

    def __post_init__(self):
        us = np.asarray(self.us, dtype=float).reshape(-1)
        zs = np.asarray(self.zs, dtype=float).reshape(-1)
        if us.shape != zs.shape or us.size == 0:
            raise ValueError("us and zs must be non-empty and of equal length")
        if np.any(us <= 0.0) or np.any(us > 1.0):
            raise ValueError("uniform draws must lie in (0, 1]")
        if not self.k >= 0.0:
            raise ValueError("k must be >= 0")
        object.__setattr__(self, "us", us)
        object.__setattr__(self, "zs", zs)
        object.__setattr__(self, "k", float(self.k))

    @classmethod
    def from_samples(cls, samples, k: float = 0.0) -> "SampleBlock":
        return cls(np.array([s.u for s in samples]), np.array([s.z for s in samples]), k)

    @property
    def samples(self) -> list[StepSample]:
        return [StepSample(float(u), float(z)) for u, z in zip(self.us, self.zs)]

    def __len__(self) -> int:
        return self.us.size


def draw_block(rng: np.random.Generator, lam: int, n: int = 2) -> SampleBlock:
    us = 1.0 - rng.random(lam)
    zs = rng.standard_normal(lam)
    return SampleBlock(us, zs, chi_squared_sample(n - 2, rng))


@dataclass(frozen=True)
class AlgoParams:
    lam: int = 5
    c: float = 1.0
    d_sigma: float = 1.0
    sigma0: float = 1.0

    def __post_init__(self):
        if int(self.lam) != self.lam or self.lam < 1:
            raise ValueError("lam must be a positive integer")
        if not 0.0 < self.c <= 1.0:
            raise ValueError("c must lie in (0, 1]")
        if not self.d_sigma > 0.0:
            raise ValueError("d_sigma must be > 0")
        if not self.sigma0 > 0.0:
            raise ValueError("sigma0 must be > 0")
        object.__setattr__(self, "lam", int(self.lam))


@dataclass
class ChainState:
    delta: float
    path: np.ndarray = field(default_factory=lambda: np.zeros(2))
    sigma: float = 1.0
    x: Optional[np.ndarray] = None
    t: int = 0
    log_sigma: float = 0.0
    last_step: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.delta > 0.0:
            raise ValueError(f"delta must be > 0, got {self.delta!r}")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be > 0")
        self.path = np.asarray(self.path, dtype=float)


def initial_state(geom: ProblemGeometry, params: AlgoParams = AlgoParams(),
                  rng: Optional[np.random.Generator] = None, track_x: bool = False) -> ChainState:
    """X0 = -n, sigma0 from ``params``, p0 ~ N(0, I) (zero when no rng is given)."""
    path = rng.standard_normal(2) if rng is not None else np.zeros(2)
    x = -geom.padded_normal() if track_x else None
    return ChainState(delta=1.0 / params.sigma0, path=path, sigma=params.sigma0, x=x,
                      log_sigma=math.log(params.sigma0))


def feasible_step(delta: float, s: StepSample, geom: ProblemGeometry) -> np.ndarray:
    """Inverse-CDF construction of one feasible step from a (u, z) pair."""
    a = truncated_normal_quantile(delta, s.u)
    return geom.from_constraint_frame(a, s.z)


def sample_feasible_step(delta: float, s: Optional[StepSample], geom: ProblemGeometry,
                         method: str = INVERSE_CDF, rng: Optional[np.random.Generator] = None,
                         max_trials: int = 10**7) -> np.ndarray:
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if method == INVERSE_CDF:
        return feasible_step(delta, s, geom)
    if method != REJECTION:
        raise ValueError(f"unknown sampling method {method!r}")
    n = geom.normal
    for _ in range(max_trials):
        v = rng.standard_normal(2)
        if delta - v @ n > 0.0:
            return v
    raise ResamplingLimitError(
        f"no feasible step after {max_trials} trials at delta={delta:g} "
        f"(acceptance probability {float(std_normal_cdf(delta)):.3g})")


def sample_feasible_steps(delta: float, size: int, geom: ProblemGeometry, method: str,
                          rng: np.random.Generator, max_trials: int = 10**7) -> np.ndarray:
    """``size`` independent feasible steps, shape (size, 2)."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if method == INVERSE_CDF:
        us = 1.0 - rng.random(size)
        zs = rng.standard_normal(size)
        return geom.from_constraint_frame(truncated_normal_quantiles(delta, us), zs)
    if method != REJECTION:
        raise ValueError(f"unknown sampling method {method!r}")
    out = np.empty((0, 2))
    trials = 0
    while out.shape[0] < size:
        need = size - out.shape[0]
        draw = rng.standard_normal((max(2 * need, 16), 2))
        trials += draw.shape[0]
        out = np.vstack([out, draw[delta - draw @ geom.normal > 0.0]])
        if trials > max_trials * size:
            raise ResamplingLimitError(f"rejection sampler exhausted at delta={delta:g}")
    return out[:size]


def sample_selected_steps(delta: float, lam: int, size: int, geom: ProblemGeometry,
                          rng: np.random.Generator) -> np.ndarray:
    """``size`` independent selected steps at a fixed ``delta``, shape (size, 2)."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    us = 1.0 - rng.random((size, lam))
    zs = rng.standard_normal((size, lam))
    cand = geom.from_constraint_frame(truncated_normal_quantiles(delta, us), zs)
    best = np.argmax(cand[..., 0], axis=1)
    return cand[np.arange(size), best]


def feasible_candidates(delta: float, block: SampleBlock, geom: ProblemGeometry) -> np.ndarray:
    return np.array([feasible_step(delta, s, geom) for s in block.samples])


def select_step(delta: float, block: SampleBlock, geom: ProblemGeometry) -> np.ndarray:
    """Candidate with the largest first coordinate; ties go to the lowest index."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    g1, g2, _, _ = _kernels.select(float(delta), block.us, block.zs, geom.cos, geom.sin)
    return np.array([g1, g2])


def _advance_x(state: ChainState, step: np.ndarray, geom: ProblemGeometry, rng):
    if state.x is None:
        return None
    x = state.x.copy()
    x[:2] += state.sigma * step
    if geom.dim > 2:
        if rng is None:
            raise ValueError("rng is required to move coordinates 3..n of a tracked point")
        x[2:] += state.sigma * rng.standard_normal(geom.dim - 2)
    return x


def step_constant_sigma(state: ChainState, block: SampleBlock, geom: ProblemGeometry,
                        rng: Optional[np.random.Generator] = None) -> ChainState:
    g1, g2, gn, _ = _kernels.select(state.delta, block.us, block.zs, geom.cos, geom.sin)
    step = np.array([g1, g2])
    return replace(state, delta=state.delta - gn, x=_advance_x(state, step, geom, rng),
                   t=state.t + 1, last_step=step)


def csa_log_step_change(path_new, k: float, params: AlgoParams, n: int) -> float:
    """ln of the multiplicative step-size change for the squared-length CSA rule."""
    # left-to-right sum of squares, the same rounding as the compiled chain loops
    sq = 0.0
    for v in np.asarray(path_new, dtype=float).ravel():
        sq += float(v) * float(v)
    return params.c / (2.0 * params.d_sigma) * ((sq + k) / n - 1.0)


def step_csa(state: ChainState, block: SampleBlock, geom: ProblemGeometry,
             params: AlgoParams, rng: Optional[np.random.Generator] = None) -> ChainState:
    c = params.c
    g1, g2, gn, _ = _kernels.select(state.delta, block.us, block.zs, geom.cos, geom.sin)
    step = np.array([g1, g2])
    path = (1.0 - c) * state.path + math.sqrt(c * (2.0 - c)) * step
    log_eta = csa_log_step_change(path, block.k, params, geom.dim)
    try:
        sigma = state.sigma * math.exp(log_eta)
    except OverflowError:
        sigma = math.inf
    if not 0.0 < sigma < math.inf:
        raise StepSizeOverflow(1 if log_eta > 0 else -1, state.t + 1)
    return replace(state, delta=(state.delta - gn) * math.exp(-log_eta), path=path, sigma=sigma,
                   x=_advance_x(state, step, geom, rng), t=state.t + 1,
                   log_sigma=state.log_sigma + log_eta, last_step=step)


def step_csa_c1(delta: float, block: SampleBlock, geom: ProblemGeometry,
                params: AlgoParams) -> float:
    """Next delta for c = 1, where the path is the selected step itself."""
    if params.c != 1.0:
        raise ValueError("step_csa_c1 requires c = 1")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    g1, g2, gn, _ = _kernels.select(float(delta), block.us, block.zs, geom.cos, geom.sin)
    log_eta = 1.0 / (2.0 * params.d_sigma) * ((g1 * g1 + g2 * g2 + block.k) / geom.dim - 1.0)
    return (delta - gn) * math.exp(-log_eta)


@dataclass
class ESTrajectory:
    """Per-iteration records of a full n-dimensional run (index t = state before step t)."""

    f: np.ndarray
    sigma: np.ndarray
    log_eta: np.ndarray
    path_head_sq: np.ndarray
    path_tail_sq: np.ndarray
    delta: Optional[np.ndarray] = None
    terminated: bool = False

    @property
    def steps(self) -> int:
        return self.log_eta.size


def generic_csa_es(objective: Callable[[np.ndarray], float], n: int, params: AlgoParams,
                   constraint: Optional[ProblemGeometry] = None, t_max: int = 1000,
                   rng: Optional[np.random.Generator] = None, x0=None, minimize: bool = False,
                   max_trials: int = 10**7,
                   increments: Optional[Callable[[np.ndarray, float, np.ndarray], np.ndarray]] = None
                   ) -> ESTrajectory:
    """Full (1, lambda)-CSA-ES in R^n with an n-dimensional evolution path.

    Only the ranking of offspring is used. By default offspring are ranked on
    ``objective(x + sigma * N)``. ``increments(x, sigma, steps)`` may instead return
    values that rank the same way but avoid the cancellation of ``f(x + sigma N)``
    once sigma is far below the resolution of x (see ``sphere_increments``).
    With ``constraint`` set, infeasible offspring are resampled; the constraint
    value is carried along incrementally so delta stays accurate near the boundary.
    The run stops early (``terminated``) if sigma leaves (1e-300, 1e300) or the
    objective stops being finite.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if constraint is not None and constraint.dim != n:
        raise ValueError("constraint dimension does not match n")
    rng = rng if rng is not None else np.random.default_rng()
    lam, c, d_sigma = params.lam, params.c, params.d_sigma
    if x0 is None:
        x = -constraint.padded_normal() if constraint is not None else np.ones(n)
    else:
        x = np.array(x0, dtype=float)
    sigma = params.sigma0
    path = rng.standard_normal(n)
    mix = math.sqrt(c * (2.0 - c))
    sign = -1.0 if minimize else 1.0
    normal = constraint.padded_normal() if constraint is not None else None
    g_x = -(x @ normal) if normal is not None else 0.0
    if normal is not None and not g_x > 0:
        raise ValueError("x0 is infeasible")

    f_rec = np.empty(t_max)
    s_rec = np.empty(t_max)
    le_rec = np.empty(t_max)
    head = np.empty(t_max)
    tail = np.empty(t_max)
    d_rec = np.empty(t_max) if constraint is not None else None
    terminated = False
    t = 0
    while t < t_max:
        steps = rng.standard_normal((lam, n))
        if normal is not None:
            d_rec[t] = g_x / sigma
            bad = steps @ normal >= d_rec[t]
            trials = 0
            while bad.any():
                trials += 1
                if trials > max_trials:
                    raise ResamplingLimitError("resampling cap reached in generic ES")
                steps[bad] = rng.standard_normal((int(bad.sum()), n))
                bad = steps @ normal >= d_rec[t]
        f_rec[t] = objective(x)
        s_rec[t] = sigma
        if increments is None:
            values = np.array([objective(y) for y in x + sigma * steps], dtype=float)
        else:
            values = np.asarray(increments(x, sigma, steps), dtype=float)
        best = int(np.argmax(sign * values))
        path = (1.0 - c) * path + mix * steps[best]
        log_eta = c / (2.0 * d_sigma) * (float(path @ path) / n - 1.0)
        le_rec[t] = log_eta
        head[t] = path[0] ** 2 + path[1] ** 2
        tail[t] = float(path[2:] @ path[2:])
        if normal is not None:
            g_x = sigma * (d_rec[t] - float(steps[best] @ normal))
        x = x + sigma * steps[best]
        sigma = sigma * math.exp(log_eta)
        t += 1
        if not (1e-300 < sigma < 1e300) or not np.isfinite(values[best]):
            terminated = True
            break
    cut = slice(0, t)
    return ESTrajectory(f_rec[cut], s_rec[cut], le_rec[cut], head[cut], tail[cut],
                        None if d_rec is None else d_rec[cut], terminated)


def sphere(x) -> float:
    return float(np.linalg.norm(x))


def sphere_increments(x, sigma, steps) -> np.ndarray:
    """(||x + sigma N||^2 - ||x||^2) / sigma for each row N; ranks like ``sphere``."""
    steps = np.asarray(steps, dtype=float)
    return 2.0 * (steps @ x) + sigma * np.einsum("ij,ij->i", steps, steps)


def linear_increments(x, sigma, steps) -> np.ndarray:
    """First step coordinate; ranks like ``fitness`` on x + sigma N."""
    return np.asarray(steps, dtype=float)[:, 0]
