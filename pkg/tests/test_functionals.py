import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from be_stability_lab.functionals import (
    FunctionalError,
    GridFunction,
    dirichlet_energy,
    entropy,
    gradient,
    integrate,
    lsi_deficit,
    poincare_deficit,
    variance,
)
from be_stability_lab.measure import Interval, build_grid_measure, gaussian
from be_stability_lab.spectral import poincare_spectrum


def gf(func, m):
    return GridFunction.from_callable(func, m)


def test_gradient_examples(gamma):
    g = gradient(gf(lambda x: x, gamma)).values
    assert np.max(np.abs(g[1:-1] - 1.0)) < 1e-12
    g2 = gradient(gf(lambda x: x**2, gamma)).values
    assert np.max(np.abs(g2[1:-1] - 2 * gamma.x[1:-1])) < 1e-10
    gs = gradient(gf(np.sin, gamma)).values
    assert np.max(np.abs(gs[1:-1] - np.cos(gamma.x[1:-1]))) <= 1e-4


def test_grid_function_rejects_bad_input(gamma):
    with pytest.raises(FunctionalError):
        GridFunction(np.zeros(5), gamma)
    vals = np.zeros(gamma.n_points)
    vals[3] = np.nan
    with pytest.raises(FunctionalError):
        GridFunction(vals, gamma)


def test_moments_and_energies(gamma):
    x = gf(lambda x: x, gamma)
    assert abs(variance(x, gamma) - 1.0) < 1e-6
    assert abs(dirichlet_energy(x, gamma) - 1.0) < 1e-4
    c = gf(lambda x: np.full_like(x, 3.0), gamma)
    assert variance(c, gamma) == pytest.approx(0.0, abs=1e-14)
    assert dirichlet_energy(c, gamma) == 0.0
    sq = gf(lambda x: x**2, gamma)
    assert abs(variance(sq, gamma) - 2.0) < 1e-4
    assert abs(dirichlet_energy(sq, gamma) - 4.0) < 1e-4


def test_energy_is_integral_of_squared_gradient(gamma, rng):
    f = GridFunction(np.cumsum(rng.normal(size=gamma.n_points)) * 0.01, gamma)
    assert dirichlet_energy(f, gamma) == integrate(gradient(f).values ** 2, gamma)


def test_entropy_examples(gamma):
    assert entropy(np.ones(gamma.n_points), gamma) == 0.0
    p = 0.5
    u2 = np.exp(p * gamma.x - p * p / 2)
    assert abs(entropy(u2, gamma) - p * p / 2) < 1e-5

    # an even node count puts the jump between nodes, so each half-line gets mass 1/2
    m = build_grid_measure(gaussian(), Interval(-8.0, 8.0, 2000))
    step = np.where(m.x > 0, 2.0, 0.0)
    assert abs(entropy(step, m) - math.log(2.0)) < 1e-4


def test_entropy_rejects_negative(gamma):
    vals = np.ones(gamma.n_points)
    vals[10] = -1e-6
    with pytest.raises(FunctionalError):
        entropy(vals, gamma)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=5, max_size=5), st.floats(0.1, 3.0))
def test_entropy_nonnegative(coeffs, scale):
    from be_stability_lab.transport import gaussian_reference

    m = gaussian_reference(401)
    g = sum(c * np.exp(-((m.x - i + 2) ** 2) / scale) for i, c in enumerate(coeffs)) + 1e-3
    assert entropy(g, m) >= -1e-10


def test_poincare_deficit_examples(gamma, n09):
    assert abs(poincare_deficit(gf(lambda x: x, gamma), gamma).absolute) < 1e-4
    rel = poincare_deficit(gf(lambda x: x, n09), n09).relative
    assert abs(rel - 0.1 / 0.9) < 1e-4


def test_lsi_deficit_carlen_tilt(gamma_fine):
    u = gf(lambda x: np.exp(x / 2), gamma_fine)
    assert abs(lsi_deficit(u, gamma_fine).absolute) < 1e-5


def test_lsi_deficit_rejects_zero(gamma):
    with pytest.raises(FunctionalError):
        lsi_deficit(GridFunction(np.zeros(gamma.n_points), gamma), gamma)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(1e-3, 1e3), p=st.floats(0.1, 2.0), q=st.floats(0.0, 0.5))
def test_relative_lsi_eps_scale_invariant(alpha, p, q, gamma):
    base = np.exp(p * gamma.x / 2 - q * gamma.x**2 / 8)
    u = GridFunction(base, gamma)
    e1 = lsi_deficit(u, gamma).relative
    e2 = lsi_deficit(u * alpha, gamma).relative
    assert abs(e1 - e2) <= 1e-12 * max(1.0, abs(e1))


def test_poincare_inequality_against_spectrum(quartic01, rng):
    lam1 = poincare_spectrum(quartic01, 1).eigenvalues[0]
    for _ in range(20):
        c = rng.normal(size=4)
        vals = sum(ci * np.sin((i + 1) * quartic01.x / 2 + ci) for i, ci in enumerate(c))
        u = GridFunction(vals, quartic01)
        assert variance(u, quartic01) <= dirichlet_energy(u, quartic01) / lam1 + 1e-6
