import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from activescalar import (ModulusParams, PiecewiseModulus, QuadratureConfig, d_alpha, d_alpha_tail_bound,
                          d_perp, fractional_laplacian_constant, kernel_table, verify_kernel_bounds)
from activescalar.dissipation import KernelTable, d_alpha_split, d_perp_core_closed_form, kernel_value
from activescalar.errors import DomainError, ValidationError
from activescalar.fields import BreakthroughPair, ScalarField
from activescalar.moduli import random_concave_modulus

FAMILY = ModulusParams(1.0, 1.0, 0.6, 0.2)


def constant(H):
    return PiecewiseModulus((), ((0.0, 1.0, H),))


def power(beta):
    return PiecewiseModulus((), ((1.0, beta, 0.0),))


# ---------------------------------------------------------------------------
# D_alpha


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.4, 0.7])
@pytest.mark.parametrize("xi", [1e-3, 0.5, 7.0])
def test_constant_modulus_closed_form(alpha, xi):
    H = 1.7
    expected = -2 * H * (xi / 2) ** (-2 * alpha) / (2 * alpha)
    assert d_alpha(constant(H), alpha, xi) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.4])
def test_linear_modulus_vanishes(alpha):
    m = PiecewiseModulus((), ((1.0, 1.0, 0.0),))
    vals = d_alpha(m, alpha, np.array([0.01, 0.3, 2.0, 50.0]))
    assert np.max(np.abs(vals)) < 1e-10


def test_frozen_oracle_values(oracles):
    for alpha, xi, ref in oracles["d_alpha"]:
        assert d_alpha(FAMILY, alpha, xi) == pytest.approx(ref, rel=1e-9), (alpha, xi)


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.4])
@pytest.mark.parametrize("beta", [0.3, 0.6])
@pytest.mark.parametrize("lam", [2.0, 10.0])
def test_power_scaling(alpha, beta, lam):
    m = power(beta)
    xi = np.array([0.03, 0.4, 2.0])
    lhs = d_alpha(m, alpha, lam * xi)
    rhs = lam ** (beta - 2 * alpha) * d_alpha(m, alpha, xi)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-6)


def test_scaling_example_ratio():
    m = power(0.6)
    assert d_alpha(m, 0.25, 2.0) / d_alpha(m, 0.25, 1.0) == pytest.approx(2**0.1, rel=1e-6)


def test_linear_in_c_alpha():
    cfg = QuadratureConfig(c_alpha=0.3)
    assert d_alpha(FAMILY, 0.25, 0.7, cfg) == pytest.approx(0.3 * d_alpha(FAMILY, 0.25, 0.7), rel=1e-12)


def test_vectorized_matches_scalar():
    xi = np.array([0.05, 0.2, 1.0, 3.0])
    vec = d_alpha(FAMILY, 0.25, xi)
    assert vec.shape == xi.shape
    np.testing.assert_allclose(vec, [d_alpha(FAMILY, 0.25, x) for x in xi], rtol=1e-12)


def test_kink_at_xi_diverges_for_large_alpha():
    # a corner at xi itself makes the near integral diverge once 2 alpha >= 1
    assert d_alpha(FAMILY, 0.6, 1.0) == -math.inf
    assert np.isfinite(d_alpha(FAMILY, 0.6, 0.5))


def test_refinement_is_stable():
    xi = np.geomspace(1e-3, 5, 12)
    for rel_tol in (1e-6, 1e-8):
        coarse = d_alpha(FAMILY, 0.25, xi, QuadratureConfig(rel_tol=rel_tol))
        fine = d_alpha(FAMILY, 0.25, xi, QuadratureConfig(rel_tol=rel_tol / 2))
        assert np.max(np.abs(coarse - fine) / np.abs(fine)) < 10 * rel_tol


def test_split_sums_to_total():
    near, far = d_alpha_split(FAMILY, 0.25, 0.3)
    assert near <= 0 and far <= 0
    assert near + far == d_alpha(FAMILY, 0.25, 0.3)


def test_rejects_bad_input():
    convex = PiecewiseModulus((1.0,), ((1.0, 1.0, 0.0), (1.0, 2.0, 0.0)))
    with pytest.raises(ValidationError):
        d_alpha(convex, 0.25, 1.0)
    with pytest.raises(DomainError):
        d_alpha(FAMILY, 1.0, 1.0)
    with pytest.raises(DomainError):
        d_alpha(FAMILY, 0.25, 0.0)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 0.25, 0.4]))
def test_concave_moduli_dissipate(seed, alpha):
    m = random_concave_modulus(np.random.default_rng(seed))
    xi = np.geomspace(1e-3, 30, 25)
    vals = d_alpha(m, alpha, xi)
    scale = np.maximum(m.value(xi), 1e-300) * xi ** (-2 * alpha)
    assert np.all(vals <= 1e-12 * scale)


# ---------------------------------------------------------------------------
# tail bound


def test_tail_bound_example():
    m = PiecewiseModulus((), ((0.0, 1.0, 0.5),))
    tb = d_alpha_tail_bound(m, 0.25, 1.0)
    assert tb.value == pytest.approx(-2 * math.sqrt(2), rel=1e-14) and not tb.degenerate
    # the far integral of a constant modulus is exactly the bound
    _, far = d_alpha_split(m, 0.25, 1.0)
    assert far == pytest.approx(tb.value, rel=1e-10)


def test_tail_bound_degenerate():
    tb = d_alpha_tail_bound(ModulusParams(1.0, 1.0, 0.6), 0.25, 1.0)
    assert tb == (0.0, True)


@pytest.mark.parametrize("xi0", [0.05, 0.5, 1.0])
def test_tail_bound_dominates(xi0):
    m = ModulusParams(1.0, 1.0, 0.6, xi0)
    for xi in np.geomspace(1e-3, 10, 15):
        assert d_alpha(m, 0.25, xi) <= d_alpha_tail_bound(m, 0.25, xi).value * (1 - 1e-12)


# ---------------------------------------------------------------------------
# perpendicular dissipation


def _pair(xi):
    return BreakthroughPair((xi / 2, 0.0), (-xi / 2, 0.0))


def test_odd_profile_has_no_perpendicular_dissipation():
    m = ModulusParams(1.0, 1.0, 0.6, 0.3)
    f = lambda X, Y: 0.5 * np.sign(X) * m.value(np.maximum(2 * np.abs(X), 1e-300))
    for xi in (0.1, 0.5, 1.0):
        val = d_perp(f, _pair(xi), m, 0.25)
        assert abs(val) < 1e-10 * m.H * xi ** (-0.5)


@pytest.mark.parametrize("alpha", [0.2, 0.4])
def test_zero_field_matches_closed_form(alpha):
    m = ModulusParams(1.0, 1.0, 0.6, 1.0)
    xi = 2.0  # 2 eta >= 1.5 > delta inside the window, so w(2 eta) = H
    val = d_perp(lambda X, Y: 0.0 * X, _pair(xi), m, alpha)
    ref = d_perp_core_closed_form(m.H, alpha, xi)
    assert val < 0
    assert val == pytest.approx(ref, rel=1e-8)


def _random_obeying(rng, m, modes=6):
    """Smooth random field with 2 sup|theta| <= w(0+), hence obeying w everywhere."""
    k = rng.integers(-4, 5, size=(modes, 2))
    ph = rng.uniform(0, 2 * np.pi, modes)
    amp = rng.uniform(-1, 1, modes)
    scale = 0.5 * m.at_zero() / np.sum(np.abs(amp))

    def f(X, Y):
        out = 0.0
        for (k1, k2), p, a in zip(k, ph, amp):
            out = out + a * np.cos(k1 * X + k2 * Y + p)
        return scale * out
    return f


def test_random_obeying_fields_are_nonpositive():
    rng = np.random.default_rng(7)
    m = ModulusParams(1.0, 1.0, 0.6, 0.4)
    for _ in range(50):
        f = _random_obeying(rng, m)
        x = rng.uniform(0, 2 * np.pi, 2)
        ang = rng.uniform(0, 2 * np.pi)
        xi = rng.uniform(0.05, 1.5)
        off = 0.5 * xi * np.array([np.cos(ang), np.sin(ang)])
        pair = BreakthroughPair(tuple(x + off), tuple(x - off))
        assert d_perp(f, pair, m, 0.3) <= 0


def test_field_input_and_validation():
    N = 64
    theta = ScalarField.from_function(lambda X, Y: 0.1 * np.sin(X) * np.cos(Y), N, 2)
    m = ModulusParams(1.0, 1.0, 0.6, 1.0)
    assert d_perp(theta, _pair(1.0), m, 0.25) <= 0
    with pytest.raises(DomainError):
        d_perp(theta, _pair(1.0), m, 0.25, c=0.3)
    with pytest.raises(DomainError):
        d_perp(ScalarField(np.zeros(16)), _pair(1.0), m, 0.25)
    with pytest.raises(TypeError):
        d_perp("field", _pair(1.0), m, 0.25)


# ---------------------------------------------------------------------------
# kernel


def test_gaussian_kernel():
    r = np.array([0.0, 0.3, 1.0, 2.5, 6.0])
    tab = kernel_table(1.0, 1, r)
    np.testing.assert_allclose(tab.values, np.exp(-r**2 / 4) / math.sqrt(4 * math.pi), rtol=1e-8, atol=1e-16)


def test_cauchy_kernel():
    r = np.array([0.0, 0.1, 1.0, 4.0, 30.0])
    tab = kernel_table(0.5, 1, r)
    np.testing.assert_allclose(tab.values, 1 / (math.pi * (1 + r**2)), rtol=1e-8)


def test_two_dimensional_poisson_kernel():
    r = np.array([0.0, 0.5, 2.0])
    tab = kernel_table(0.5, 2, r)
    np.testing.assert_allclose(tab.values, (1 + r**2) ** -1.5 / (2 * math.pi), rtol=1e-8)


def test_kernel_matches_stable_law(oracles):
    for alpha, r, ref in oracles["kernel_1d"]:
        assert kernel_value(alpha, 1, r) == pytest.approx(ref, rel=1e-7), (alpha, r)


def test_kernel_bounds_cauchy():
    tab = kernel_table(0.5, 1, np.geomspace(1e-2, 100, 25))
    rep = verify_kernel_bounds(tab)
    assert rep.ok and 0 < rep.C1 <= rep.C2
    assert rep.C1 == pytest.approx(1 / math.pi, rel=1e-6)
    assert rep.tail_exponent == pytest.approx(-2.0, abs=0.01)


def test_kernel_bounds_fractional_order():
    tab = kernel_table(0.3, 1, np.geomspace(1e-2, 200, 20))
    rep = verify_kernel_bounds(tab)
    assert rep.ok and rep.C1 > 0
    assert np.all(np.diff(tab.values) < 0)


def test_kernel_bounds_tampered_table():
    tab = kernel_table(0.5, 1, [0.1, 1.0, 2.0])
    bad = KernelTable(0.5, 1, tab.radii, tab.values * np.array([1, -1, 1]))
    rep = verify_kernel_bounds(bad)
    assert not rep and "nonpositive" in rep.message


def test_gaussian_fails_power_law_bound():
    tab = kernel_table(1.0, 1, np.linspace(0, 20, 21))
    rep = verify_kernel_bounds(tab)
    assert not rep
    assert "faster" in rep.message and "alpha < 1" in rep.message


def test_fractional_laplacian_constant():
    assert fractional_laplacian_constant(0.5, 1) == pytest.approx(1 / math.pi, rel=1e-15)
    # d = 2, a = 1/2: Gamma(3/2) / (pi Gamma(1/2)) * 2 * 1/2 = 1 / (2 pi)
    assert fractional_laplacian_constant(0.5, 2) == pytest.approx(1 / (2 * math.pi), rel=1e-15)
