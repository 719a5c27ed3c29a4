import math

import numpy as np
import pytest
from scipy import integrate

from nhwave import coeffs as cf
from nhwave.expr import Expression, ExpressionError

EPS = [2.0 ** -k for k in range(3, 11)]


def test_sample_regular_profile():
    p = cf.profile("2 + sin(t)", 0.0, "Linf1", T=1.0, a0=1.0)
    t = cf.time_grid(1.0, 11)
    a, q = cf.sample_profile(p, t)
    np.testing.assert_allclose(a, 2 + np.sin(t), rtol=1e-15)
    assert np.all(q == 0)


def test_sample_dirac_must_mollify():
    p = cf.profile([1.0, cf.dirac(0.5)], 0.0, "Distributional")
    with pytest.raises(cf.MustMollifyError):
        cf.sample_profile(p, np.linspace(0, 1, 5))


def test_profile_contract_errors():
    with pytest.raises(cf.ProfileError, match="valid"):
        cf.profile("1", tag="Lipschitz")
    with pytest.raises(cf.ProfileError):
        cf.profile([1.0, cf.dirac(0.5)], tag="Linf1", a0=1.0)
    with pytest.raises(cf.ProfileError):
        cf.profile([1.0, cf.dirac(2.0)], tag="Distributional")
    with pytest.raises(cf.ProfileError):
        cf.profile("1", T=0.0)
    with pytest.raises(cf.ProfileError, match="below"):
        cf.profile("1 + 0.5*cos(6*t)", tag="Linf1", a0=1.0).check()
    with pytest.raises(cf.ProfileError, match="negative"):
        cf.profile("t - 0.5", tag="Smooth", l=2).check()
    with pytest.raises(cf.ProfileError):
        cf.DistributionalAtom("spike", 0.5)


def test_atom_orders():
    assert cf.dirac(0.1).order == 1
    assert cf.dirac_prime(0.1).order == 2
    assert cf.heaviside(0.1).order == 0
    assert cf.Coefficient((cf.regular("1"), cf.dirac_prime(0.5))).order == 2


def test_holder_line():
    t = np.linspace(0, 1, 1001)
    assert cf.holder_constant(lambda s: s, 1.0, t) == pytest.approx(1.0, abs=1e-10)


def test_holder_sqrt():
    t = np.linspace(0, 1, 4097)
    assert cf.holder_constant(np.sqrt, 0.5, t) == pytest.approx(1.0, abs=1e-3)


def test_holder_constant_profile():
    t = np.linspace(0, 1, 101)
    assert cf.holder_constant(cf.profile("3", tag="Smooth"), 0.7, t) == 0.0
    with pytest.raises(ValueError):
        cf.holder_constant(np.sqrt, 2.0, t)


def test_derivative_and_smooth_norms():
    assert cf.derivative_sup(Expression("sin(t)", "t"), 1.0) == pytest.approx(1.0, rel=1e-6)
    assert cf.smooth_norm(Expression("t**2", "t"), 1.0, 2) == pytest.approx(2.0, rel=1e-4)


class TestMollifier:
    def test_unit_mass_and_support(self):
        m = cf.Mollifier()
        mass, _ = integrate.quad(m.psi, 0, 1, epsabs=0, epsrel=1e-12)
        assert mass == pytest.approx(1.0, rel=1e-10)
        assert m.psi(np.array([-0.1, 0.0, 1.0, 1.3])).tolist() == [0, 0, 0, 0]
        assert np.all(m.psi(np.linspace(0.01, 0.99, 50)) > 0)

    def test_sup_and_derivative_mass(self):
        m = cf.Mollifier()
        x = np.linspace(0, 1, 100001)
        assert m.sup == pytest.approx(m.psi(x).max(), rel=1e-9)
        l1, _ = integrate.quad(lambda y: abs(m.dpsi(y)), 0, 1, points=[0.5], limit=200)
        assert m.dpsi_l1 == pytest.approx(l1, rel=1e-8)

    def test_derivatives_match_finite_differences(self):
        m = cf.Mollifier(beta=0.7)
        x = np.linspace(0.05, 0.95, 19)
        h = 1e-6
        np.testing.assert_allclose(m.dpsi(x), (m.psi(x + h) - m.psi(x - h)) / (2 * h), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(m.d2psi(x), (m.dpsi(x + h) - m.dpsi(x - h)) / (2 * h), rtol=1e-5, atol=1e-6)

    def test_cdf(self):
        m = cf.Mollifier()
        np.testing.assert_allclose(m.cdf(np.array([-1.0, 0.0, 0.5, 1.0, 2.0])), [0, 0, 0.5, 1, 1], atol=1e-12)

    def test_rules(self):
        assert cf.Mollifier().omega(0.25) == 0.25
        m = cf.Mollifier(rule="log", L=2.0, C=4.0)
        assert float(m.omega(math.exp(-8))) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            cf.Mollifier(rule="log")
        with pytest.raises(ValueError):
            cf.Mollifier(rule="sqrt")
        with pytest.raises(ValueError):
            cf.Mollifier(beta=0)


def test_convolution_of_linear_function():
    # ∫ (t - ωx) ψ(x) dx = t - ω/2 for a symmetric bump, away from the clip
    m = cf.Mollifier()
    t = np.linspace(0.5, 1.0, 11)
    v, d = m.convolve(lambda s: s, t, 0.1, 2.0)
    np.testing.assert_allclose(v, t - 0.05, atol=1e-12)
    np.testing.assert_allclose(d, 1.0, atol=1e-10)


def test_smooth_root_constant():
    p = cf.profile("4", tag="HolderNondeg", a0=4.0, alpha=0.5)
    for e in (0.5, 2.0 ** -6):
        sr = cf.smooth_root(p, e)
        np.testing.assert_allclose(sr.values, 2.0, atol=1e-10)
        np.testing.assert_allclose(sr.derivative, 0.0, atol=1e-9)


def test_smooth_root_bound_and_slopes():
    p = cf.profile("2 + pow(abs(sin(t)), 0.5)", tag="HolderNondeg", a0=2.0, alpha=0.5)
    Ma = cf.holder_constant(p, 0.5, np.linspace(0, 1, 2 ** 14 + 1))
    r = cf.root_function(p)
    for e in EPS:
        sr = cf.smooth_root(p, e)
        err = np.max(np.abs(sr.values - r(sr.t)))
        assert err <= Ma / (2 * math.sqrt(2.0)) * e ** 0.5 * 1.05
    s = cf.root_estimate_slopes(p, EPS)
    assert abs(s["error_slope"] - 0.5) <= 0.15
    assert abs(s["derivative_slope"] + 0.5) <= 0.15


def test_smooth_root_rejects_negative_and_bad_eps():
    with pytest.raises(cf.ProfileError):
        cf.smooth_root(cf.profile("t - 2", tag="Smooth", l=2), 0.1)
    with pytest.raises(ValueError):
        cf.smooth_root(cf.profile("1", tag="Smooth", l=2), 0.0)


def test_dirac_net_peak_is_exact():
    m = cf.Mollifier()
    eps = [2.0 ** -k for k in range(3, 13)]
    t = np.linspace(0, 1, 2 ** 13 + 1)  # contains every peak 1/2 + ε/2
    net = cf.mollify_net(cf.profile([cf.dirac(0.5)], tag="Distributional"), m, eps, t)
    peak = np.max(np.abs(net.a), axis=1)
    np.testing.assert_allclose(peak, m.sup / np.array(eps), rtol=1e-12)
    assert abs(cf.loglog_slope(eps, peak) + 1) <= 0.02


def test_heaviside_net_monotone_in_unit_interval():
    net = cf.mollify_net(cf.profile([cf.heaviside(0.5)], tag="Distributional"), cf.Mollifier(), EPS)
    assert np.all(net.a >= -1e-15) and np.all(net.a <= 1 + 1e-15)
    assert np.all(np.diff(net.a, axis=1) >= -1e-14)
    # derivative checked where the grid resolves the bump
    fd = np.gradient(net.a[:3], net.t, axis=1)
    np.testing.assert_allclose(net.da[:3], fd, atol=1e-3 * np.abs(net.da[:3]).max())


def test_shifted_dirac_lower_bound():
    net = cf.mollify_net(cf.profile([1.0, cf.dirac(0.5)], tag="Distributional"), cf.Mollifier(), EPS)
    assert net.a.min() >= 1.0 - 1e-14


def test_constant_is_fixed_point():
    net = cf.mollify_net(cf.profile("3", "-2", tag="Linf1", a0=3.0), cf.Mollifier(), EPS)
    np.testing.assert_allclose(net.a, 3.0, atol=1e-10)
    np.testing.assert_allclose(net.q, -2.0, atol=1e-10)
    np.testing.assert_allclose(net.da, 0.0, atol=1e-8)


def test_dirac_prime_closed_form_matches_derivative_of_dirac():
    m = cf.Mollifier()
    t = np.linspace(0, 1, 2001)
    v1, d1 = cf.mollify_coefficient(cf.Coefficient((cf.dirac(0.4),)), m, 0.1, t, 1.0)
    v2, _ = cf.mollify_coefficient(cf.Coefficient((cf.dirac_prime(0.4),)), m, 0.1, t, 1.0)
    # δ' ∗ ψ_ω = (δ ∗ ψ_ω)'
    np.testing.assert_allclose(v2, d1, rtol=1e-12, atol=1e-12)


def test_net_input_errors():
    p = cf.profile("1")
    with pytest.raises(ValueError):
        cf.mollify_net(p, cf.Mollifier(), [])
    with pytest.raises(ValueError):
        cf.mollify_net(p, cf.Mollifier(), [2.0])


class TestExpression:
    def test_functions(self):
        e = Expression("exp(-x) + pow(abs(x), 0.5) * cos(pi*x) - sin(x)", "x")
        x = np.linspace(-1, 1, 7)
        np.testing.assert_allclose(e(x), np.exp(-x) + np.abs(x) ** 0.5 * np.cos(np.pi * x) - np.sin(x))

    def test_constant_broadcasts(self):
        assert Expression("2.5", "t")(np.zeros(4)).shape == (4,)

    @pytest.mark.parametrize("text", ["__import__('os')", "x.real", "y + 1", "open('f')", "x if x else 1", "1 +"])
    def test_rejects(self, text):
        with pytest.raises(ExpressionError):
            Expression(text, "x")
