import math

import numpy as np
import pytest

from resampling_es.es_core import AlgoParams
from resampling_es.markov_lab import (
    C1_CHAIN,
    CONSTANT_SIGMA,
    CSA,
    CSA_C1,
    FULL_SIGMA,
    ChainSpec,
    EstimatorResult,
    batch_means,
    c1_rate_from_trace,
    csa_rate,
    estimate,
    make_rng,
    pool_replicas,
    progress_rate,
    replicate_estimates,
    run_chain,
)
from resampling_es.problem import ProblemGeometry

QUARTER = ProblemGeometry(math.pi / 4)


def test_spec_validation():
    with pytest.raises(ValueError):
        ChainSpec("bogus", QUARTER)
    with pytest.raises(ValueError):
        ChainSpec(CSA_C1, QUARTER, AlgoParams(c=0.5))


def test_result_validation():
    with pytest.raises(ValueError):
        EstimatorResult(0.0, 0.0, steps=10, burnin=10, batches=50, seed=0)
    with pytest.raises(ValueError):
        EstimatorResult(0.0, 0.0, steps=100, burnin=0, batches=5, seed=0)


def test_batch_means_iid():
    x = np.random.default_rng(0).standard_normal(100_000)
    m, se = batch_means(x)
    assert m == pytest.approx(x.mean())
    assert se == pytest.approx(1 / math.sqrt(x.size), rel=0.3)
    with pytest.raises(ValueError):
        batch_means(np.ones(10), 50)


def test_streams_are_independent_and_reproducible():
    a = make_rng(1, 2).random(4)
    assert np.array_equal(a, make_rng(1, 2).random(4))
    assert not np.array_equal(a, make_rng(1, 3).random(4))
    assert not np.array_equal(a, make_rng(1).random(4))


@pytest.mark.parametrize("kind", [CONSTANT_SIGMA, CSA, CSA_C1])
def test_determinism(kind):
    spec = ChainSpec(kind, ProblemGeometry(0.3, 4), AlgoParams(lam=6, c=1.0))
    a = estimate(spec, "delta", 20_000, 1000, seed=5)
    b = estimate(spec, "delta", 20_000, 1000, seed=5)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)
    c = estimate(spec, "delta", 20_000, 1000, seed=6)
    assert c.mean != a.mean


def test_chain_stays_feasible():
    for kind in (CONSTANT_SIGMA, CSA):
        tr = run_chain(ChainSpec(kind, ProblemGeometry(0.05), AlgoParams(lam=10, c=0.3)),
                       200_000, seed=2)
        assert np.all(tr.delta > 0) and np.all(np.isfinite(tr.delta))
        assert np.all(tr.g_dot_n < tr.delta)


def test_stationary_identities():
    spec = ChainSpec(CONSTANT_SIGMA, QUARTER, AlgoParams(lam=10))
    tr = run_chain(spec, 400_000, seed=3)
    gn, gn_se = batch_means(tr.series("g_dot_n"))
    assert abs(gn) <= 3 * gn_se
    g1, s1 = batch_means(tr.series("g1"))
    g2, s2 = batch_means(tr.series("g2"))
    assert abs(g1 + g2) <= 4 * math.hypot(s1, s2)


def test_fault_injection_breaks_identity():
    spec = ChainSpec(CONSTANT_SIGMA, QUARTER, AlgoParams(lam=10))
    for seed in (0, 3):
        tr = run_chain(spec, 20_000, seed=seed, inject_fault=True)
        if tr.delta.min() > 0:
            gn, se = batch_means(tr.series("g_dot_n"))
            assert abs(gn) > 3 * se


def test_stderr_scales_with_length():
    spec = ChainSpec(CONSTANT_SIGMA, ProblemGeometry(0.5), AlgoParams(lam=5))
    short = estimate(spec, "delta", 100_000, 1000, seed=4)
    long = estimate(spec, "delta", 400_000, 1000, seed=4)
    assert 1.5 <= short.stderr / long.stderr <= 2.7


def test_replicas_are_consistent():
    spec = ChainSpec(CONSTANT_SIGMA, ProblemGeometry(0.3), AlgoParams(lam=5))
    res = replicate_estimates(spec, "delta", 50_000, 1000, seed=7, replicas=8, jobs=4)
    assert [r.config["replica"] for r in res] == list(range(8))
    means = np.array([r.mean for r in res])
    ses = np.array([r.stderr for r in res])
    for i in range(8):
        for j in range(i):
            assert abs(means[i] - means[j]) <= 4 * math.hypot(ses[i], ses[j])
    serial = replicate_estimates(spec, "delta", 50_000, 1000, seed=7, replicas=8, jobs=1)
    assert [r.mean for r in serial] == list(means)
    m, se = pool_replicas(res)
    assert se > 0 and m == pytest.approx(means.mean())


def test_g_dot_n_equals_projection():
    tr = run_chain(ChainSpec(CSA, ProblemGeometry(0.7), AlgoParams(lam=5, c=0.5)), 5000, 1)
    proj = tr.g1 * math.cos(0.7) + tr.g2 * math.sin(0.7)
    np.testing.assert_allclose(tr.g_dot_n, proj, atol=1e-12)


def test_progress_rate_scaling():
    res = progress_rate(ProblemGeometry(0.1), 5, steps=100_000, seed=1)
    assert res.mean > 3 * res.stderr
    assert 0.005 <= res.mean / 5 <= 0.02
    doubled = progress_rate(ProblemGeometry(0.1), 5, sigma=2.0, steps=100_000, seed=1)
    assert doubled.mean == pytest.approx(2 * res.mean, rel=1e-15)


def test_delta_ordering_in_lambda():
    means = [estimate(ChainSpec(CONSTANT_SIGMA, ProblemGeometry(0.3), AlgoParams(lam=lam)),
                      "delta", 100_000, seed=2).mean for lam in (5, 10, 20)]
    assert means[0] > means[1] > means[2]


def test_c1_modes_agree_and_identity():
    geom = ProblemGeometry(0.7)
    params = AlgoParams(lam=5, c=1.0)
    a = csa_rate(geom, params, 200_000, seed=1, mode=C1_CHAIN)
    b = csa_rate(geom, params, 200_000, seed=2, mode=FULL_SIGMA)
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.stderr, b.stderr)
    tr = run_chain(ChainSpec(CSA_C1, geom, params), 50_000, seed=3)
    expected = (1 / (2 * 1.0 * 2)) * (float(tr.series("gnorm2").mean()) - 2.0)
    assert c1_rate_from_trace(tr).mean == expected
    with pytest.raises(ValueError):
        csa_rate(geom, AlgoParams(c=0.5), 1000, mode=C1_CHAIN)
    with pytest.raises(ValueError):
        csa_rate(geom, params, 2000, mode="bogus")


def test_csa_rate_sign_structure():
    params = AlgoParams(lam=5, c=1.0, d_sigma=1.0)
    low = csa_rate(ProblemGeometry(0.05), params, 100_000, seed=1)
    high = csa_rate(ProblemGeometry(1.2), params, 100_000, seed=1)
    assert low.mean < -3 * low.stderr
    assert high.mean > 3 * high.stderr


def test_low_damping_escapes():
    res = csa_rate(ProblemGeometry(0.05), AlgoParams(lam=5, c=1 / math.sqrt(2), d_sigma=0.05),
                   100_000, seed=1)
    assert res.mean > 3 * res.stderr
    assert res.flag == "diverged"


def test_estimate_rejects_unknown_statistic():
    with pytest.raises(ValueError):
        estimate(ChainSpec(CSA, QUARTER), "bogus", 2000)
    with pytest.raises(ValueError):
        run_chain(ChainSpec(CSA, QUARTER), 100, seed=0, burnin=100)
