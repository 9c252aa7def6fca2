import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy import integrate

from hardyspace.exceptions import PreconditionError, SeminormError, SymbolError
from hardyspace.grid import GridSpec
from hardyspace.operator import build_operator
from hardyspace.symbols import (Symbol, bump_mass, calderon_constant, cross_scale_decay_report,
                                default_seminorm_order, dictionary_seminorm,
                                finite_propagation_report, first_order_symbol, from_expression,
                                heat_generator_symbol, heat_symbol, make_bump,
                                make_calderon_bundle, monomial_times, normalize_member,
                                rational_symbol, richardson_derivative, smooth_cutoff,
                                weighted_l2_report)


@pytest.fixture(scope="module")
def bundle():
    return make_calderon_bundle(1)


def test_heat_symbol_values_and_derivatives():
    g = heat_symbol()
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(g(x), np.exp(-x * x))
    np.testing.assert_allclose(g.derivative(x, 1), -2 * x * np.exp(-x * x), atol=1e-14)
    np.testing.assert_allclose(g.derivative(x, 2), (4 * x * x - 2) * np.exp(-x * x), atol=1e-13)


def test_from_expression_matches_closed_form():
    x = sp.Symbol("x")
    s = from_expression(sp.cos(x) * sp.exp(-x ** 2))
    xs = np.linspace(-2, 2, 9)
    want = -np.sin(xs) * np.exp(-xs ** 2) - 2 * xs * np.cos(xs) * np.exp(-xs ** 2)
    np.testing.assert_allclose(s.derivative(xs, 1), want, atol=1e-14)


def test_richardson_derivative_accuracy():
    xs = np.linspace(-1, 1, 7)
    d = richardson_derivative(np.sin, xs, 3)
    np.testing.assert_allclose(d, -np.cos(xs), atol=1e-6)


def test_richardson_rejects_non_smooth():
    with pytest.raises(SeminormError):
        richardson_derivative(lambda x: np.abs(x) ** 2.5, np.array([0.0]), 4)


def test_even_check():
    assert heat_symbol().check_even() == 0
    odd = Symbol(lambda x: x * np.exp(-x * x), "odd")
    with pytest.raises(SymbolError):
        odd.check_even()


def test_bump_normalized_and_supported():
    phi = make_bump()
    assert integrate.quad(phi, -1, 1, epsabs=1e-13)[0] == pytest.approx(1.0, abs=1e-10)
    assert np.all(phi(np.array([1.0, 1.2, -1.01, 5.0])) == 0)
    assert bump_mass() == pytest.approx(integrate.quad(
        lambda x: math.exp(-1 / (1 - x * x)) if abs(x) < 1 else 0.0, -1, 1, epsabs=1e-14)[0],
        rel=1e-10)


def test_phi_is_cosine_transform(bundle):
    phi = bundle.phi_bump
    for xi in (0.0, 1.0, 7.5, 40.0, 120.0):
        want = 2 * integrate.quad(lambda x: phi(np.array(x)) * math.cos(xi * x), 0, 1,
                                  limit=400, epsabs=1e-14)[0]
        assert float(bundle.Phi(np.array(xi))) == pytest.approx(want, abs=1e-11)


def test_phi_derivatives_match_finite_difference(bundle):
    x = np.array([0.3, 2.0, 9.0])
    fd = richardson_derivative(bundle.Phi, x, 1, step=1e-2)
    np.testing.assert_allclose(bundle.Phi.derivative(x, 1), fd, atol=1e-8)


def test_psi_is_monomial_times_phi(bundle):
    x = np.linspace(0, 20, 41)
    np.testing.assert_allclose(bundle.Psi(x), x ** 2 * bundle.Phi(x), atol=1e-14)
    d = bundle.Psi.derivative(x, 2)
    want = 2 * bundle.Phi(x) + 4 * x * bundle.Phi.derivative(x, 1) \
        + x * x * bundle.Phi.derivative(x, 2)
    np.testing.assert_allclose(d, want, atol=1e-10)


def test_monomial_times_generic():
    s = monomial_times(heat_symbol(), 3)
    x = np.array([0.5, 1.5])
    np.testing.assert_allclose(s(x), x ** 3 * np.exp(-x * x))


def test_calderon_constant_independent_quadrature(bundle):
    Psi = bundle.Psi
    inner = integrate.quad(lambda u: float(Psi(np.array(u))) * u * math.exp(-u * u),
                           0, 12, limit=400, epsabs=1e-13)[0]
    assert bundle.c_psi == pytest.approx(1 / inner, rel=1e-8)


def test_eta_identity(bundle):
    x = np.linspace(0, 8, 81)
    x2 = np.linspace(1e-4, 8, 81)
    assert float(bundle.eta(np.array(0.0))) == 1.0
    # -x d/dx eta(x) = c_psi Psi(x) x^2 e^{-x^2}
    lhs = -x2 * bundle.eta.derivative(x2, 1)
    rhs = bundle.c_psi * bundle.Psi(x2) * x2 ** 2 * np.exp(-x2 ** 2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)
    assert np.max(np.abs(bundle.eta(x))) <= 1.0 + 1e-12


def test_scalar_reproduction(bundle):
    from hardyspace.maximal import ScaleGrid
    scales = ScaleGrid.per_factor(1e-4, 1e3, 64, math.e)
    mu = np.geomspace(1e-1, 1e2, 20)
    np.testing.assert_allclose(bundle.scalar_reproduction(mu, scales), 1.0, atol=1e-3)


def test_default_seminorm_order():
    assert default_seminorm_order(1, 1) == 6
    assert default_seminorm_order(1, 0.5) == 8
    assert default_seminorm_order(3, 1) == 14


def test_seminorm_of_gaussian_order_zero():
    assert dictionary_seminorm(heat_symbol(), 0) == pytest.approx(math.sqrt(math.pi / 2),
                                                                  rel=1e-12)


def test_seminorm_order_one_matches_quad():
    g = heat_symbol()
    want = 2 * integrate.quad(lambda x: (1 + x) * (1 + 4 * x * x) * math.exp(-2 * x * x),
                              0, np.inf, epsabs=1e-14)[0]
    assert dictionary_seminorm(g, 1) == pytest.approx(want, rel=1e-10)


def test_seminorm_monotone_in_order():
    g = heat_symbol()
    vals = [dictionary_seminorm(g, N) for N in range(4)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_normalize_member_has_unit_seminorm():
    s = normalize_member(rational_symbol(), 2)
    assert dictionary_seminorm(s, 2) == pytest.approx(1.0, rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5.0))
def test_smooth_cutoff_support(R):
    c = smooth_cutoff(R)
    x = np.linspace(0, 2 * R, 101)
    v = c(x)
    assert np.all(v[x >= R] == 0)
    assert v[0] == pytest.approx(1.0)


def test_symbol_library_is_even():
    for s in (heat_symbol(), heat_generator_symbol(), rational_symbol()):
        assert s.check_even() <= 1e-12
    assert first_order_symbol()(np.array(1.0)) == pytest.approx(math.exp(-1))


def test_finite_propagation_small_outside_mass(lap128):
    rep = finite_propagation_report(lap128, 1, [8 / 128, 0.1, 0.2])
    assert rep.measured_constant <= 1e-6
    assert rep.columns == ["t", "outside_mass", "sup_scaled"]


def test_finite_propagation_rejects_small_t(lap128):
    with pytest.raises(PreconditionError):
        finite_propagation_report(lap128, 0, [1 / 128])


def test_weighted_l2_report_requires_compact_support(lap128):
    with pytest.raises(PreconditionError):
        weighted_l2_report(lap128, heat_symbol(), 2.0, 2.0)
    rep = weighted_l2_report(lap128, smooth_cutoff(40.0), 40.0, 2.0)
    assert rep.measured_constant > 0


def test_cross_scale_rejects_nonvanishing(lap128, bundle):
    with pytest.raises(PreconditionError):
        cross_scale_decay_report(lap128, heat_symbol(), bundle.Psi, 2.0, [(0.1, 0.1)])


@pytest.fixture(scope="module")
def lap512():
    return build_operator("laplacian", GridSpec(1, 512))


def test_cross_scale_symmetry(lap128, bundle):
    psi = first_order_symbol()
    a = cross_scale_decay_report(lap128, psi, bundle.Psi, 1.0, [(0.1, 0.05)])
    b = cross_scale_decay_report(lap128, bundle.Psi, psi, 1.0, [(0.05, 0.1)])
    assert a.rows[0]["measured_C"] == pytest.approx(b.rows[0]["measured_C"], rel=1e-10)


def test_cross_scale_small_s_tracks_ratio(lap512):
    psi = first_order_symbol()
    t = 0.125
    ratios = [1.0, 0.5, 0.25, 0.125]
    rep = cross_scale_decay_report(lap512, psi, psi, 1.0, [(t * r, t) for r in ratios])
    sup = rep.column("sup_kernel")
    scaled = sup / sup[0] / np.array(ratios)
    assert np.all((scaled >= 1 / 3) & (scaled <= 3))
    slope = np.polyfit(np.log(ratios[2:]), np.log(sup[2:]), 1)[0]
    assert abs(slope - 1) <= 0.2


def test_weighted_l2_stable_across_R(lap128):
    ratios = [weighted_l2_report(lap128, smooth_cutoff(R), R, 2.0).measured_constant
              for R in (4.0, 8.0, 16.0)]
    assert np.all(np.abs(np.array(ratios) / np.mean(ratios) - 1) <= 0.3)


def test_weighted_l2_monotone_in_s(lap128):
    w = [weighted_l2_report(lap128, smooth_cutoff(8.0), 8.0, s).rows[0]["weighted_sum"]
         for s in (2.0, 4.0)]
    assert w[1] > w[0]


def test_weighted_l2_zero_symbol(lap128):
    zero = Symbol(lambda x: np.zeros_like(x), "zero", support=1.0)
    assert weighted_l2_report(lap128, zero, 4.0, 2.0).measured_constant == 0.0
