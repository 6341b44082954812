"""Time-average estimators over the normalized-distance chains.

A run draws its randomness in chunks from a seeded numpy generator, pushes each
chunk through a compiled loop, and keeps the per-step series. Estimates are
post-burn-in time averages with batch-means standard errors.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .es_core import AlgoParams, generic_csa_es, sphere, sphere_increments
from .problem import ProblemGeometry
from .scalar_math import chi_squared_sample

CONSTANT_SIGMA = "constant_sigma"
CSA = "csa"
CSA_C1 = "csa_c1"
KINDS = (CONSTANT_SIGMA, CSA, CSA_C1)
STATISTICS = ("delta", "g1", "g_dot_n", "g2", "gnorm2", "log_eta")

DEFAULT_STEPS = 10**6
DEFAULT_BURNIN = 10**3
DEFAULT_BATCHES = 50
_CHUNK = 1 << 14


@dataclass(frozen=True)
class ChainSpec:
    kind: str
    geom: ProblemGeometry
    params: AlgoParams = AlgoParams()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown chain kind {self.kind!r}")
        if self.kind == CSA_C1 and self.params.c != 1.0:
            raise ValueError("csa_c1 chains require c = 1")

    def describe(self) -> dict:
        return {"kind": self.kind, "theta": self.geom.theta, "n": self.geom.dim,
                "lambda": self.params.lam, "c": self.params.c,
                "d_sigma": self.params.d_sigma}


@dataclass
class EstimatorResult:
    mean: float
    stderr: float
    steps: int
    burnin: int
    batches: int
    seed: int
    config: dict = field(default_factory=dict)
    flag: Optional[str] = None

    def __post_init__(self):
        if self.steps <= self.burnin:
            raise ValueError("steps must exceed burnin")
        if self.batches < 10:
            raise ValueError("need at least 10 batches")

    def scaled(self, factor: float, **extra) -> "EstimatorResult":
        cfg = dict(self.config, **extra)
        return EstimatorResult(self.mean * factor, self.stderr * abs(factor), self.steps,
                               self.burnin, self.batches, self.seed, cfg, self.flag)


@dataclass
class ChainTrace:
    """Per-step series of one chain run; index t holds the state before step t."""

    spec: ChainSpec
    seed: int
    burnin: int
    delta: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    g_dot_n: np.ndarray
    log_eta: np.ndarray
    final_delta: float
    final_log_sigma: float

    @property
    def steps(self) -> int:
        return self.delta.size

    @property
    def gnorm2(self) -> np.ndarray:
        return self.g1 * self.g1 + self.g2 * self.g2

    def series(self, statistic: str) -> np.ndarray:
        if statistic not in STATISTICS:
            raise ValueError(f"unknown statistic {statistic!r}")
        return getattr(self, statistic)[self.burnin:]


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for a master seed and an optional replica/grid key (independent streams)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def batch_means(x: np.ndarray, batches: int = DEFAULT_BATCHES) -> tuple[float, float]:
    """Mean of ``x`` and its batch-means standard error over ``batches`` equal blocks."""
    x = np.asarray(x, dtype=float)
    size = x.size // batches
    if size < 1:
        raise ValueError(f"{x.size} samples cannot fill {batches} batches")
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(batches))


def _draw_chunk(rng, m, lam, n):
    us = 1.0 - rng.random((m, lam))
    zs = rng.standard_normal((m, lam))
    ks = chi_squared_sample(n - 2, rng, size=m)
    return us, zs, ks


def run_chain(spec: ChainSpec, steps: int, seed: int, burnin: int = DEFAULT_BURNIN,
              delta0: float = 1.0, p0=None, inject_fault: bool = False,
              rng: Optional[np.random.Generator] = None) -> ChainTrace:
    """Simulate ``steps`` transitions of the chain described by ``spec``.

    ``p0`` defaults to a standard normal draw from the run's stream. ``inject_fault``
    flips the sign of the constant-sigma update (mutation testing only).
    """
    if steps <= burnin:
        raise ValueError("steps must exceed burnin")
    if not delta0 > 0:
        raise ValueError("delta0 must be > 0")
    rng = rng if rng is not None else make_rng(seed)
    geom, params = spec.geom, spec.params
    lam, n = params.lam, geom.dim
    cos, sin = geom.cos, geom.sin
    out = {name: np.empty(steps) for name in ("delta", "g1", "g2", "g_dot_n", "log_eta")}
    if spec.kind == CSA:
        p = rng.standard_normal(2) if p0 is None else np.asarray(p0, dtype=float)
        p1, p2 = float(p[0]), float(p[1])
    delta, log_sigma = float(delta0), 0.0
    sign = -1.0 if inject_fault else 1.0
    for start in range(0, steps, _CHUNK):
        m = min(_CHUNK, steps - start)
        us, zs, ks = _draw_chunk(rng, m, lam, n)
        view = {k: v[start:start + m] for k, v in out.items()}
        if spec.kind == CONSTANT_SIGMA:
            delta = _kernels.run_constant(delta, us, zs, cos, sin, sign, view["delta"],
                                          view["g1"], view["g2"], view["g_dot_n"])
            view["log_eta"][:] = 0.0
        elif spec.kind == CSA_C1:
            delta, log_sigma = _kernels.run_csa_c1(
                delta, log_sigma, us, zs, ks, cos, sin, params.d_sigma, float(n),
                view["delta"], view["g1"], view["g2"], view["g_dot_n"], view["log_eta"])
        else:
            _, delta, p1, p2, log_sigma = _kernels.run_csa(
                delta, p1, p2, log_sigma, us, zs, ks, cos, sin, params.c, params.d_sigma,
                float(n), math.inf, True, view["delta"], view["g1"], view["g2"],
                view["g_dot_n"], view["log_eta"])
    return ChainTrace(spec, int(seed), int(burnin), out["delta"], out["g1"], out["g2"],
                      out["g_dot_n"], out["log_eta"], float(delta), float(log_sigma))


def _overflow_flag(trace: ChainTrace) -> Optional[str]:
    # sigma itself would leave double range here even though log sigma is tracked
    if trace.final_log_sigma > 709.0:
        return "diverged"
    if trace.final_log_sigma < -708.0:
        return "converged"
    return None


def summarize(trace: ChainTrace, statistic: str, batches: int = DEFAULT_BATCHES) -> EstimatorResult:
    mean, se = batch_means(trace.series(statistic), batches)
    cfg = dict(trace.spec.describe(), statistic=statistic)
    return EstimatorResult(mean, se, trace.steps, trace.burnin, batches, trace.seed, cfg,
                           _overflow_flag(trace))


def estimate(spec: ChainSpec, statistic: str, steps: int = DEFAULT_STEPS,
             burnin: int = DEFAULT_BURNIN, seed: int = 0,
             batches: int = DEFAULT_BATCHES, **run_kw) -> EstimatorResult:
    """Post-burn-in time average of one per-step statistic of a single chain run."""
    if statistic not in STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}")
    return summarize(run_chain(spec, steps, seed, burnin, **run_kw), statistic, batches)


def progress_rate(geom: ProblemGeometry, lam: int, sigma: float = 1.0,
                  steps: int = DEFAULT_STEPS, seed: int = 0, burnin: int = DEFAULT_BURNIN,
                  batches: int = DEFAULT_BATCHES) -> EstimatorResult:
    """sigma times the stationary mean of the selected first coordinate (constant sigma)."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    spec = ChainSpec(CONSTANT_SIGMA, geom, AlgoParams(lam=lam, sigma0=sigma))
    res = estimate(spec, "g1", steps, burnin, seed, batches)
    return res.scaled(sigma, statistic="phi_star", sigma=sigma)


C1_CHAIN = "c1_chain"
FULL_SIGMA = "full_sigma"


def c1_rate_from_trace(trace: ChainTrace, batches: int = DEFAULT_BATCHES) -> EstimatorResult:
    """(1/(2 d_sigma n)) (avg ||G||^2 + (n - 2) - n), with chi^2 terms at their mean."""
    params, n = trace.spec.params, trace.spec.geom.dim
    scale = 1.0 / (2.0 * params.d_sigma * n)
    avg, se = batch_means(trace.series("gnorm2"), batches)
    cfg = dict(trace.spec.describe(), statistic="csa_rate", mode=C1_CHAIN)
    return EstimatorResult(scale * (avg + (n - 2) - n), scale * se, trace.steps, trace.burnin,
                           batches, trace.seed, cfg, _overflow_flag(trace))


def csa_rate(geom: ProblemGeometry, params: AlgoParams, steps: int = DEFAULT_STEPS,
             seed: int = 0, mode: str = FULL_SIGMA, burnin: int = DEFAULT_BURNIN,
             batches: int = DEFAULT_BATCHES) -> EstimatorResult:
    """Geometric rate of the step-size, ln(sigma_t / sigma_burnin) / (t - burnin)."""
    if mode == C1_CHAIN:
        if params.c != 1.0:
            raise ValueError("c1_chain mode requires c = 1")
        return c1_rate_from_trace(run_chain(ChainSpec(CSA_C1, geom, params), steps, seed, burnin),
                                  batches)
    if mode != FULL_SIGMA:
        raise ValueError(f"unknown csa_rate mode {mode!r}")
    res = estimate(ChainSpec(CSA, geom, params), "log_eta", steps, burnin, seed, batches)
    res.config.update(statistic="csa_rate", mode=FULL_SIGMA)
    return res


def replicate_estimates(spec: ChainSpec, statistic: str, steps: int, burnin: int, seed: int,
                        replicas: int, jobs: int = 1,
                        batches: int = DEFAULT_BATCHES) -> list[EstimatorResult]:
    """Independent replicas on streams spawned from ``seed``; returned in replica order."""

    def one(r):
        res = summarize(run_chain(spec, steps, seed, burnin, rng=make_rng(seed, r)), statistic,
                        batches)
        res.config["replica"] = r
        return res

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(one, range(replicas)))


def pool_replicas(results: list[EstimatorResult]) -> tuple[float, float]:
    """Average of replica means with the standard error of that average."""
    means = np.array([r.mean for r in results])
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(means.size))


def sphere_mean_log_eta(n: int, params: AlgoParams, steps: int, seed: int,
                        replicates: int) -> tuple[float, float, int]:
    """Mean ln(sigma_{t+1}/sigma_t) of the minimizing ES on the sphere, pooled over replicates.

    Returns (mean, stderr over replicate means, number of runs stopped early).
    """
    means, stopped = [], 0
    for r in range(replicates):
        tr = generic_csa_es(sphere, n, params, t_max=steps, rng=make_rng(seed, r), minimize=True,
                            increments=sphere_increments)
        means.append(float(tr.log_eta.mean()))
        stopped += int(tr.terminated)
    m = np.array(means)
    se = float(m.std(ddof=1) / math.sqrt(m.size)) if m.size > 1 else math.nan
    return float(m.mean()), se, stopped
