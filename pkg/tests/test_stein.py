import math

import numpy as np
import pytest

from be_stability_lab.functionals import GridFunction, lsi_deficit, normalize_l2
from be_stability_lab.measure import build_grid_measure, gaussian, product, quartic
from be_stability_lab.spectral import near_optimal_family, poincare_spectrum
from be_stability_lab.stein import (
    PiecewiseLinear,
    PreconditionError,
    Ridge,
    SteinError,
    TanhSum,
    absolute_value,
    identity,
    lsi_el_residual,
    lsi_ibp_residual,
    ou_poisson_solve,
    poincare_ibp_residual,
    stein_w1_assembly,
    tilt_vector,
)

SQRT_PI = math.sqrt(math.pi)
Y = np.linspace(-6.0, 6.0, 1201)


def tilt(m, p):
    """``e^{p x / 2}`` normalized in ``L^2(m)``."""
    return normalize_l2(GridFunction(np.exp(p * m.x / 2), m), m)


def test_poisson_linear_input():
    sol = ou_poisson_solve(identity(), Y)
    assert np.max(np.abs(sol.h - 1.0)) < 1e-8


def test_poisson_quadratic_input():
    sol = ou_poisson_solve(lambda y: y**2, Y)
    assert np.max(np.abs(sol.h - Y)) < 1e-7


@pytest.mark.parametrize("f", [identity(), lambda y: y**2, np.sin, absolute_value()], ids=["y", "y2", "sin", "abs"])
def test_poisson_identity_residual(f):
    sol = ou_poisson_solve(f, Y)
    assert sol.identity_residual <= 1e-5


def test_poisson_absolute_value_lipschitz():
    sol = ou_poisson_solve(absolute_value(), Y)
    assert sol.lipschitz_estimate <= SQRT_PI + 1e-6


def test_poisson_random_lipschitz_bound(rng):
    for _ in range(100):
        f = PiecewiseLinear.random(rng)
        assert f.lipschitz <= 1.0
        sol = ou_poisson_solve(f, Y)
        assert sol.lipschitz_estimate <= SQRT_PI + 1e-6
        assert sol.identity_residual <= 1e-5


def test_poisson_from_grid_function(gamma):
    sol = ou_poisson_solve(GridFunction(np.abs(gamma.x), gamma))
    assert sol.identity_residual <= 1e-5
    assert sol.as_grid_function().host is gamma


def test_poisson_linearity(rng):
    f, g = TanhSum.random(rng), TanhSum.random(rng)
    a, b = 0.7, -1.9
    combo = ou_poisson_solve(lambda y: a * f(y) + b * g(y), Y)
    hf, hg = ou_poisson_solve(f, Y), ou_poisson_solve(g, Y)
    assert np.max(np.abs(combo.h - (a * hf.h + b * hg.h))) < 1e-8


def test_stein_identity_under_gaussian(gamma_fine, rng):
    u = normalize_l2(GridFunction(gamma_fine.x, gamma_fine), gamma_fine)
    for _ in range(20):
        for h in (PiecewiseLinear.random(rng), TanhSum.random(rng)):
            rep = poincare_ibp_residual(u, h, gamma_fine)
            assert abs(rep.lhs) <= 1e-6
            assert rep.rhs == 0.0


def test_poincare_residual_scaled_gaussian_closed_form():
    delta = 0.1
    s = math.sqrt(1 - delta)
    m = build_grid_measure(gaussian(1 - delta))
    u = GridFunction(m.x / s, m)
    rep = poincare_ibp_residual(u, lambda y: y**2 + y, m)
    # E[x/s (x^2 + x)] - E[(2x + 1)/s] = s - 1/s
    assert abs(rep.lhs - (s - 1 / s)) < 1e-6
    rhs = math.sqrt(delta / (1 - delta)) * math.sqrt(4 * s * s + 1)
    assert abs(rep.rhs - rhs) < 1e-4
    assert rep.passed


def test_poincare_residual_needs_normalized_u(gamma):
    with pytest.raises(PreconditionError):
        poincare_ibp_residual(GridFunction(gamma.x * 2, gamma), identity(), gamma)


def test_poincare_residual_antisymmetric(quartic01, rng):
    u = poincare_spectrum(quartic01, 1).eigenfunctions[0]
    h = GridFunction(TanhSum.random(rng)(quartic01.x), quartic01)
    a, b = poincare_ibp_residual(u, h, quartic01), poincare_ibp_residual(u, -h, quartic01)
    assert a.lhs == -b.lhs
    assert a.passed == b.passed


def test_poincare_residual_quartic_random_h(rng):
    m = build_grid_measure(quartic(0.05))
    u = poincare_spectrum(m, 1).eigenfunctions[0]
    for _ in range(20):
        rep = poincare_ibp_residual(u, PiecewiseLinear.random(rng), m)
        assert rep.passed, rep


@pytest.mark.parametrize("p", [0.5, 1.0, 2.0])
def test_lsi_el_at_gaussian_optimizer(gamma_fine, rng, p):
    u = tilt(gamma_fine, p)
    for h in (identity(), PiecewiseLinear.random(rng), TanhSum.random(rng)):
        rep = lsi_el_residual(u, h, gamma_fine)
        assert abs(rep.lhs) <= 1e-5
        assert rep.terms["inner_factor_nonnegative"]


def test_lsi_el_scaled_gaussian(n09):
    rep = lsi_el_residual(tilt(n09, 1.0), identity(), n09)
    assert rep.passed and rep.slack > 0
    assert rep.terms["inner_factor"] >= -1e-8


def test_lsi_el_with_h_equal_u_is_half_deficit(n09, quartic01):
    for m in (n09, quartic01):
        u = tilt(m, 0.8)
        rep = lsi_el_residual(u, u, m)
        assert abs(rep.lhs - 0.5 * lsi_deficit(u, m).absolute) < 1e-6


def test_lsi_el_rejects_nonpositive(gamma):
    with pytest.raises(SteinError):
        lsi_el_residual(GridFunction(gamma.x, gamma), identity(), gamma)


@pytest.mark.parametrize("q", [0.5, 1.0, 1.5])
def test_tilt_vector_gaussian(gamma_fine, q):
    rep = tilt_vector(tilt(gamma_fine, q), gamma_fine)
    assert abs(rep.p - q) < 1e-5
    assert rep.grad_gap <= 1e-8
    assert rep.log_variance <= 1e-8


def test_tilt_vector_constant(gamma):
    rep = tilt_vector(GridFunction(np.ones(gamma.n_points), gamma), gamma)
    assert abs(rep.p) < 1e-10


def test_tilt_vector_scaled_gaussian_reports_ratios(n09):
    rep = tilt_vector(tilt(n09, 1.0), n09)
    ratios = rep.ratios()
    assert all(v is not None and math.isfinite(v) for v in ratios.values())
    assert rep.lam == pytest.approx(0.5, abs=1e-9)


def test_lsi_ibp_linear_g_under_gaussian(gamma_fine):
    u = tilt(gamma_fine, 1.0)
    p = tilt_vector(u, gamma_fine).p
    assert abs(lsi_ibp_residual(identity(), gamma_fine, p, u).lhs) < 1e-6


def test_lsi_ibp_any_g_under_gaussian(gamma_fine, rng):
    u = tilt(gamma_fine, 1.0)
    p = tilt_vector(u, gamma_fine).p
    for _ in range(10):
        g = PiecewiseLinear.random(rng)
        assert abs(lsi_ibp_residual(g, gamma_fine, p, u).lhs) < 1e-5


def test_lsi_ibp_is_centering_invariant(n09, rng):
    u = tilt(n09, 1.0)
    p = tilt_vector(u, n09).p
    g = PiecewiseLinear.random(rng)
    shifted = lambda x: g(x) + 3.7
    a = lsi_ibp_residual(g, n09, p, u).lhs
    b = lsi_ibp_residual(shifted, n09, p, u).lhs
    assert abs(a - b) < 1e-12


def test_lsi_ibp_ratios_stay_bounded_as_eps_shrinks():
    peaks = {}
    for delta in (0.01, 0.05, 0.2):
        m = build_grid_measure(gaussian(1 - delta))
        u = tilt(m, 1.0)
        p = tilt_vector(u, m).p
        gen = np.random.default_rng(7)
        ratios = [lsi_ibp_residual(PiecewiseLinear.random(gen), m, p, u).terms["ratio"] for _ in range(50)]
        assert all(r is not None and math.isfinite(r) for r in ratios)
        peaks[delta] = max(ratios)
    assert peaks[0.01] <= peaks[0.2]


# three-term assembly


def test_assembly_exact_gaussian_linear_f(gamma):
    m = product(gamma, gamma)
    rep = stein_w1_assembly(m, near_optimal_family(m, 1), Ridge(identity(), np.array([1.0, 0.0])))
    assert all(abs(t) <= 1e-5 for t in rep.terms)
    assert rep.within_bounds


def test_assembly_scaled_factor_abs(n09, gamma):
    m = product(n09, gamma)
    rep = stein_w1_assembly(m, near_optimal_family(m, 1), Ridge(absolute_value(), np.array([1.0, 0.0])))
    assert rep.within_bounds


def test_assembly_direct_term_matches_gaussian_oracle():
    # isotropic N(0, 1 - delta)^2 keeps eps below the gate; compare with closed-form first absolute moments
    delta = 0.002
    f1 = build_grid_measure(gaussian(1 - delta))
    m = product(f1, f1)
    fam = near_optimal_family(m, 1)
    rep = stein_w1_assembly(m, fam, Ridge(absolute_value(), np.array([1.0, 0.0])))
    assert not rep.gated
    from be_stability_lab.spectral import hermite_linear_part_product

    sigma = hermite_linear_part_product(fam).direction[0]
    c2 = sigma[0] ** 2
    split_var = c2 + (1 - delta) * (1 - c2)
    oracle = math.sqrt(2 / math.pi) * (math.sqrt(1 - delta) - math.sqrt(split_var))
    assert abs(rep.direct - oracle) < 1e-5
    assert abs(rep.total - rep.direct) < 1e-10
    assert rep.within_bounds


@pytest.mark.slow
def test_assembly_random_ridges_respect_split_bound(rng):
    delta = 0.002
    f1 = build_grid_measure(gaussian(1 - delta))
    m = product(f1, f1, theta=0.3)
    fam = near_optimal_family(m, 1)
    worst = 0.0
    for _ in range(8):
        rep = stein_w1_assembly(m, fam, Ridge.random(rng))
        assert rep.within_bounds
        worst = max(worst, abs(rep.total) - rep.quadrature_error)
    assert worst <= rep.split_bound


def test_assembly_gate(n09):
    m = product(n09, n09)
    rep = stein_w1_assembly(m, near_optimal_family(m, 1), Ridge(identity(), np.array([1.0, 0.0])))
    assert rep.gated and rep.within_bounds is None
    assert "(18k)^-2" in rep.note


def test_assembly_rejects_k2(gamma):
    m = product(gamma, gamma)
    with pytest.raises(SteinError):
        stein_w1_assembly(m, near_optimal_family(m, 2), Ridge(identity(), np.array([1.0, 0.0])))
