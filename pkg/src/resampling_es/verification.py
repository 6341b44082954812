"""Invariant suite behind the ``verify`` command.

Each check returns a :class:`CheckResult` holding the measured quantity and the
tolerance it was held to. ``quick`` shrinks sample sizes to ~10^4; ``inject_fault``
flips the sign of the constant-sigma update so the stationary checks must fail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .es_core import INVERSE_CDF, REJECTION, AlgoParams, sample_feasible_steps
from .markov_lab import (
    CONSTANT_SIGMA,
    CSA,
    CSA_C1,
    ChainSpec,
    batch_means,
    c1_rate_from_trace,
    make_rng,
    run_chain,
)
from .problem import ProblemGeometry, selected_first_marginal, selected_second_marginal
from .scalar_math import integrate


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status}  {self.name}: measured={self.measured:.6g} tol={self.tolerance:.3g}"
        return f"{text}  ({self.detail})" if self.detail else text


def check_sampler_ks(delta: float, draws: int, seed: int, theta: float = math.pi / 6) -> CheckResult:
    """Two-sample KS distance of v.n between the inverse-CDF and rejection samplers."""
    geom = ProblemGeometry(theta)
    inv = sample_feasible_steps(delta, draws, geom, INVERSE_CDF, make_rng(seed, 1)) @ geom.normal
    rej = sample_feasible_steps(delta, draws, geom, REJECTION, make_rng(seed, 2)) @ geom.normal
    ks = stats.ks_2samp(inv, rej).statistic
    # 0.01 at 10^5 draws; widened to the alpha = 1e-3 critical value for smaller runs
    tol = max(0.01, 1.95 * math.sqrt(2.0 / draws))
    return CheckResult(f"sampler_ks[delta={delta:g}]", bool(ks < tol), float(ks), tol,
                       f"{draws} draws each")


def check_first_normalization(delta: float, lam: int, theta: float = math.pi / 4) -> CheckResult:
    geom = ProblemGeometry(theta)
    mass = integrate(lambda x: float(selected_first_marginal(geom, delta, lam, x)),
                     -math.inf, math.inf)
    err = abs(mass - 1.0)
    return CheckResult(f"first_marginal_mass[delta={delta:g},lambda={lam}]", err < 1e-8,
                       err, 1e-8)


def check_second_normalization(delta: float, lam: int, theta: float = math.pi / 4) -> CheckResult:
    geom = ProblemGeometry(theta)
    mass = integrate(lambda y: float(selected_second_marginal(geom, delta, lam, y)),
                     -math.inf, math.inf)
    err = abs(mass - 1.0)
    return CheckResult(f"second_marginal_mass[delta={delta:g},lambda={lam}]", err < 1e-6,
                       err, 1e-6)


def check_stationary_identities(steps: int, seed: int, inject_fault: bool = False,
                                theta: float = math.pi / 4, lam: int = 10) -> list[CheckResult]:
    """Under the constant-sigma stationary law E[G.n] = 0 and E[G1] + tan(theta) E[G2] = 0."""
    geom = ProblemGeometry(theta)
    burnin = min(1000, steps // 10)
    trace = run_chain(ChainSpec(CONSTANT_SIGMA, geom, AlgoParams(lam=lam)), steps, seed,
                      burnin, inject_fault=inject_fault)
    with np.errstate(all="ignore"):
        gn, gn_se = batch_means(trace.series("g_dot_n"))
        g1, g1_se = batch_means(trace.series("g1"))
        g2, g2_se = batch_means(trace.series("g2"))
    tan = math.tan(theta)
    combo = g1 + tan * g2
    combo_se = math.hypot(g1_se, tan * g2_se)
    low = float(np.min(trace.delta))
    # a chain that leaves delta > 0 or freezes has no stationary law to test
    sane = low > 0.0 and gn_se > 0.0 and combo_se > 0.0 and math.isfinite(combo)
    return [
        CheckResult("stationary_delta_positive", low > 0.0, low, 0.0, "min over the run"),
        CheckResult("stationary_mean_g_dot_n", sane and abs(gn) <= 3.0 * gn_se, gn, 3.0 * gn_se,
                    f"{steps} steps, tol = 3 stderr"),
        CheckResult("stationary_g1_plus_tan_g2", sane and abs(combo) <= 4.0 * combo_se, combo,
                    4.0 * combo_se, "tol = 4 combined stderr"),
    ]


def check_c1_identity(steps: int, seed: int, theta: float = 0.7, lam: int = 5) -> list[CheckResult]:
    """For n = 2 and c = 1 the path is the selected step, so the rate is a function of ||G||^2.

    On the same draws the c = 1 CSA chain and the delta-only chain must coincide
    bit for bit, and the rate computed from avg ||G||^2 must equal the average of
    the per-step log changes up to summation rounding.
    """
    geom = ProblemGeometry(theta)
    params = AlgoParams(lam=lam, c=1.0)
    burnin = min(1000, steps // 10)
    c1 = run_chain(ChainSpec(CSA_C1, geom, params), steps, seed, burnin)
    full = run_chain(ChainSpec(CSA, geom, params), steps, seed, burnin, p0=(0.0, 0.0))
    same = all(np.array_equal(getattr(c1, k), getattr(full, k))
               for k in ("delta", "g1", "g2", "log_eta"))
    rate = c1_rate_from_trace(c1).mean
    direct = (1.0 / (2.0 * params.d_sigma * 2)) * (float(c1.series("gnorm2").mean()) - 2.0)
    avg_log = float(c1.series("log_eta").mean())
    gap = abs(rate - avg_log)
    tol = 1e-12 * max(1.0, abs(avg_log))
    return [
        CheckResult("c1_chain_equals_csa_at_c1", same, float(not same), 0.0,
                    "bitwise on delta, G, log eta"),
        CheckResult("c1_rate_formula", rate == direct, abs(rate - direct), 0.0, "bitwise"),
        CheckResult("c1_rate_vs_mean_log_eta", gap <= tol, gap, tol),
    ]


def run_checks(quick: bool = False, inject_fault: bool = False, seed: int = 0) -> list[CheckResult]:
    draws = 20_000 if quick else 100_000
    steps = 10_000 if quick else 1_000_000
    out = [check_sampler_ks(d, draws, seed) for d in (0.2, 1.0, 5.0)]
    out += [check_first_normalization(d, lam) for d in (0.1, 1.0, 3.0) for lam in (1, 5, 20)]
    out.append(check_second_normalization(1.0, 5))
    if not quick:
        out += [check_second_normalization(d, 20) for d in (0.1, 3.0)]
    out += check_stationary_identities(steps, seed, inject_fault)
    out += check_c1_identity(steps, seed)
    return out
