import math

import numpy as np
import pytest

from be_stability_lab.functionals import GridFunction, dirichlet_energy, dirichlet_form, integrate, variance
from be_stability_lab.measure import build_grid_measure, gaussian, product, quartic
from be_stability_lab.spectral import (
    HypothesisError,
    SpectralError,
    deficit_eps,
    discrete_dirichlet_form,
    hermite_linear_part,
    hermite_linear_part_product,
    joint_spectrum_2d,
    near_optimal_family,
    poincare_spectrum,
)


def test_gaussian_spectrum(gamma):
    res = poincare_spectrum(gamma, 3)
    assert abs(res.poincare_constant - 1.0) < 2e-3
    assert np.allclose(res.eigenvalues, [1.0, 2.0, 3.0], atol=1e-2)
    err = math.sqrt(integrate((res.eigenfunctions[0].values - gamma.x) ** 2, gamma))
    assert err <= 1e-2


def test_eigenfunction_invariants(quartic01):
    res = poincare_spectrum(quartic01, 3)
    for i, u in enumerate(res.eigenfunctions):
        assert abs(integrate(u, quartic01)) < 1e-8
        assert abs(integrate(u.values**2, quartic01) - 1.0) < 1e-8
        for v in res.eigenfunctions[i + 1 :]:
            assert abs(discrete_dirichlet_form(u, v, quartic01)) < 1e-8
            assert abs(dirichlet_form(u, v, quartic01)) < 1e-4
    assert np.all(res.residual_norms < 1e-8)
    # the solver's own discrete form reproduces the eigenvalues
    assert np.allclose(res.rayleigh_quotients(), res.eigenvalues, atol=1e-8, rtol=0)


def test_central_difference_rayleigh_quotient_is_second_order(quartic01):
    res = poincare_spectrum(quartic01, 2)
    for lam, u in zip(res.eigenvalues, res.eigenfunctions):
        assert abs(dirichlet_energy(u, quartic01) / variance(u, quartic01) - lam) < 1e-4


def test_scaled_gaussian_constant(n09):
    assert abs(poincare_spectrum(n09, 1).poincare_constant - 0.9) < 2e-3


def test_quartic_sandwich():
    m = build_grid_measure(quartic(0.05))
    res = poincare_spectrum(m, 1)
    eps = deficit_eps(res.eigenfunctions[0], m)
    assert 1 - eps - 5e-3 <= res.poincare_constant <= 1 + 5e-3


@pytest.mark.parametrize(
    "pot", [gaussian(), gaussian(0.5), quartic(0.01), quartic(0.2), gaussian(0.8, 1.0)], ids=lambda p: p.name
)
def test_bakry_emery_bound(pot):
    m = build_grid_measure(pot)
    assert m.convexity_margin >= -1e-6
    res = poincare_spectrum(m, 1)
    assert res.poincare_constant <= 1 + 5e-3
    eps = deficit_eps(res.eigenfunctions[0], m)
    assert 1 - eps - 5e-3 <= res.poincare_constant


def test_poincare_constant_converges_at_second_order():
    # C_P of N(0, 0.9) is its variance
    def err(n):
        m = build_grid_measure(gaussian(0.9), n_points=n)
        return abs(poincare_spectrum(m, 1).poincare_constant - 0.9)

    e = [err(n) for n in (201, 401, 801)]
    ratios = [e[0] / e[1], e[1] / e[2]]
    assert all(3.0 <= r <= 5.0 for r in ratios), ratios


def test_sign_convention(gamma):
    u = poincare_spectrum(gamma, 1).eigenfunctions[0]
    assert integrate(u.values * gamma.x, gamma) > 0


def test_family_gaussian_pair(gamma):
    fam = near_optimal_family(product(gamma, gamma), 2)
    assert fam.eps <= 2e-3
    rep = fam.hypothesis_report()
    assert all(abs(v) < 1e-8 for v in rep["means"])
    assert all(abs(v - 1) < 1e-8 for v in rep["norms"])
    assert all(abs(v) < 1e-6 for v in rep["gradient_cross_terms"])


def test_family_scaled_factor(n09, gamma):
    m = product(n09, gamma)
    fam = near_optimal_family(product(n09, n09), 1)
    assert abs(fam.eps - (1 / 0.9 - 1)) < 2e-3
    # with a gamma factor present the lowest mode is the gamma coordinate
    assert near_optimal_family(m, 1).eps <= 2e-3


def test_family_error_names_spectrum(gamma):
    m = product(build_grid_measure(quartic(0.2)), gamma)
    with pytest.raises(HypothesisError, match="realized spectrum"):
        near_optimal_family(m, 2, eps_target=0.01)


def test_one_dimensional_family_k(gamma):
    with pytest.raises(HypothesisError):
        near_optimal_family(gamma, 2)


def test_joint_solve_agrees_with_composition(quartic01, gamma):
    m = product(quartic01, gamma, theta=math.pi / 6)
    composed = np.sort(
        np.concatenate([poincare_spectrum(f, 3).eigenvalues for f in m.factors])
    )[:3]
    joint = joint_spectrum_2d(m, 3)
    assert np.allclose(joint, composed, atol=5e-3)


def test_hermite_identity(gamma):
    u = GridFunction.from_callable(lambda x: x, gamma)
    est = hermite_linear_part(u, gamma)
    assert abs(est.w[0] - 1.0) < 1e-6
    assert est.alignment < 1e-6


def test_hermite_scaled_gaussian(n09):
    u = poincare_spectrum(n09, 1).eigenfunctions[0]
    est = hermite_linear_part(u, n09, eps=1 / 0.9 - 1)
    assert est.direction[0] == 1.0
    assert est.alignment <= 9 * (1 / 0.9 - 1)


def test_hermite_gate_on_second_mode(gamma):
    h2 = GridFunction.from_callable(lambda x: (x**2 - 1) / math.sqrt(2), gamma)
    est = hermite_linear_part(h2, gamma)
    assert not est.gate_ok
    assert "(18k)^-2" in est.note


def test_hermite_degenerate_direction_inside_gate(gamma):
    even = GridFunction.from_callable(lambda x: (x**2 - 1) / math.sqrt(2), gamma)
    with pytest.raises(SpectralError):
        hermite_linear_part(even, gamma, eps=0.0)


def test_hermite_product_rotated(n09, gamma):
    theta = 0.4
    m = product(n09, n09, theta=theta)
    fam = near_optimal_family(m, 1)
    est = hermite_linear_part_product(fam)
    d = est.direction[0]
    assert abs(np.linalg.norm(d) - 1) < 1e-12
    assert abs(abs(d @ [math.cos(theta), math.sin(theta)]) - 1) < 1e-6
