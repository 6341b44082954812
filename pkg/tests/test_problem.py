import math

import numpy as np
import pytest
from scipy import integrate as spi
from scipy import special

from resampling_es.problem import (
    ProblemGeometry,
    constraint_value,
    feasible_first_cdf,
    feasible_first_marginal,
    feasible_step_density,
    fitness,
    is_feasible,
    selected_first_cdf,
    selected_first_marginal,
    selected_marginals,
    selected_second_marginal,
    selected_step_density,
)
from resampling_es.scalar_math import integrate

QUARTER = ProblemGeometry(math.pi / 4)


def phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


@pytest.mark.parametrize("theta", [0.0, math.pi / 2, -0.1, 2.0, math.nan])
def test_geometry_rejects_bad_angle(theta):
    with pytest.raises(ValueError):
        ProblemGeometry(theta)


def test_geometry_rejects_bad_dim():
    with pytest.raises(ValueError):
        ProblemGeometry(0.3, 1)
    with pytest.raises(ValueError):
        ProblemGeometry(0.3, 2.5)


def test_rotation_maps_axes_to_frame():
    g = ProblemGeometry(0.4)
    np.testing.assert_allclose(g.rotation @ [1, 0], g.normal)
    np.testing.assert_allclose(g.rotation @ [0, 1], g.normal_perp)
    np.testing.assert_allclose(g.from_constraint_frame(0.7, -1.3), g.rotation @ [0.7, -1.3])
    assert g.padded_normal().shape == (2,)
    assert np.array_equal(ProblemGeometry(0.4, 5).padded_normal()[2:], np.zeros(3))


def test_fitness_and_constraint():
    assert fitness([1, 0]) == 1
    assert fitness([0, 3, 4]) == 0
    assert fitness([-2.5, 7]) == -2.5
    for theta in (0.1, 0.8, 1.5):
        g = ProblemGeometry(theta)
        assert constraint_value(g, -g.normal) == pytest.approx(1.0, rel=1e-15)
    assert constraint_value(QUARTER, [0, 0]) == 0.0
    assert not is_feasible(QUARTER, [0, 0])
    assert constraint_value(QUARTER, [1, 0]) == pytest.approx(-math.sqrt(2) / 2)


def test_feasible_density_values():
    assert float(feasible_step_density(QUARTER, 1.0, [0, 0])) == pytest.approx(
        phi(0) ** 2 / special.ndtr(1.0), rel=1e-14)
    assert float(feasible_step_density(QUARTER, 1.0, [0, 0])) == pytest.approx(0.18916733, rel=1e-7)
    v = QUARTER.normal * 1.0
    assert float(feasible_step_density(QUARTER, 1.0, v)) == 0.0
    v = np.array([0.3, -1.1])
    assert float(feasible_step_density(QUARTER, 1e9, v)) == pytest.approx(phi(0.3) * phi(-1.1),
                                                                          rel=1e-12)


def test_feasible_marginal_value():
    expected = phi(0) * special.ndtr(1 / math.sin(math.pi / 4)) / special.ndtr(1.0)
    assert float(feasible_first_marginal(QUARTER, 1.0, 0.0)) == pytest.approx(expected, rel=1e-14)
    assert float(feasible_first_marginal(QUARTER, 1.0, 0.0)) == pytest.approx(0.43688, abs=1e-5)
    xs = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(feasible_first_marginal(QUARTER, 1e9, xs),
                               [phi(x) for x in xs], rtol=1e-14)


@pytest.mark.parametrize("delta", [0.1, 1.0, 3.0])
@pytest.mark.parametrize("theta", [0.05, math.pi / 4, 1.5])
def test_first_cdf_matches_quadrature(delta, theta):
    g = ProblemGeometry(theta)
    for x in (-13.0, -4.0, -0.37, 0.0, 0.81, 2.5, 13.0):
        ref = spi.quad(lambda u: float(feasible_first_marginal(g, delta, u)), -np.inf, x,
                       epsabs=1e-14, epsrel=1e-12, limit=500)[0]
        assert float(feasible_first_cdf(g, delta, x)) == pytest.approx(ref, abs=1e-12)


def test_first_cdf_monotone_and_bounded():
    xs = np.linspace(-15, 15, 3001)
    f = feasible_first_cdf(ProblemGeometry(0.3), 0.5, xs)
    assert np.all(np.diff(f) >= 0)
    assert f[0] >= 0 and f[-1] == 1.0


def test_selected_density_reduces_to_feasible_for_one_offspring():
    pts = np.random.default_rng(0).normal(size=(50, 2))
    np.testing.assert_array_equal(selected_step_density(QUARTER, 1.0, 1, pts),
                                  feasible_step_density(QUARTER, 1.0, pts))


def test_selected_density_value():
    f0 = float(feasible_first_cdf(QUARTER, 1.0, 0.0))
    expected = 5 * phi(0) ** 2 / special.ndtr(1.0) * f0 ** 4
    assert float(selected_step_density(QUARTER, 1.0, 5, [0, 0])) == pytest.approx(expected,
                                                                                  rel=1e-14)
    assert float(selected_step_density(QUARTER, 1.0, 5, [2.0, 2.0])) == 0.0


def test_selected_first_marginal_large_delta_is_order_statistic():
    xs = np.linspace(-4, 4, 33)
    lam = 5
    ref = [lam * phi(x) * special.ndtr(x) ** (lam - 1) for x in xs]
    np.testing.assert_allclose(selected_first_marginal(QUARTER, 1e9, lam, xs), ref, rtol=1e-12)


@pytest.mark.parametrize("delta", [0.1, 1.0, 3.0])
@pytest.mark.parametrize("lam", [1, 5, 20])
def test_normalizations(delta, lam):
    g = ProblemGeometry(0.6)
    first, second = selected_marginals(g, delta, lam)
    assert integrate(lambda x: float(first(x)), -math.inf, math.inf) == pytest.approx(1, abs=1e-8)
    assert integrate(lambda x: float(feasible_first_marginal(g, delta, x)), -math.inf,
                     math.inf) == pytest.approx(1, abs=1e-8)
    if lam != 20 or delta == 1.0:
        assert integrate(lambda y: float(second(y)), -math.inf, math.inf) == pytest.approx(
            1, abs=1e-6)


@pytest.mark.parametrize("lam", [1, 5])
def test_joint_density_normalizes(lam):
    g = ProblemGeometry(0.6)
    delta = 1.0
    # integrate over the feasible half plane in (n, n_perp) coordinates
    val = spi.dblquad(
        lambda z, a: float(selected_step_density(g, delta, lam, g.from_constraint_frame(a, z))),
        -9, delta, -9, 9, epsabs=1e-10)[0]
    assert val == pytest.approx(1.0, abs=1e-6)


def test_second_marginal_is_integral_of_joint():
    g = ProblemGeometry(0.6)
    for y in (-1.2, 0.0, 0.9):
        upper = (1.0 - y * g.sin) / g.cos
        ref = spi.quad(lambda x: float(selected_step_density(g, 1.0, 5, [x, y])), -12, upper,
                       epsabs=1e-13, limit=200)[0]
        assert float(selected_second_marginal(g, 1.0, 5, y)) == pytest.approx(ref, abs=1e-9)


def test_selected_first_cdf_is_power():
    xs = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(selected_first_cdf(QUARTER, 0.4, 7, xs),
                               feasible_first_cdf(QUARTER, 0.4, xs) ** 7)


def test_invalid_delta():
    with pytest.raises(ValueError):
        feasible_step_density(QUARTER, 0.0, [0, 0])
    with pytest.raises(ValueError):
        feasible_first_cdf(QUARTER, -1.0, 0.0)
