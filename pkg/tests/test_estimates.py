import numpy as np
import pytest

from nhwave import coeffs as cf
from nhwave import estimates as est
from nhwave.evolution import modal_forcing


@pytest.fixture(scope="module")
def u0_data(ho_small):
    return est.ModeData.from_functions(ho_small, v0=ho_small.right[:, 0])


def gevrey(E, s):
    return est.ModeData.gevrey(E, 1.0, s, 1.0, 1.0)


class TestCase1:
    def test_reference_profile_passes(self, ho_small, u0_data):
        p = cf.profile("2 + sin(t)", "0.5", "Linf1", a0=1.0)
        r = est.verify_case1(ho_small, p, u0_data, 0.0)
        assert r.passed and r.margins.min() > 0
        assert r.details["sandwich"]
        assert r.constants["C"] >= 1

    def test_conservation_case(self, ho_small, u0_data):
        p = cf.profile("1", "1", "Linf1", a0=1.0)
        r = est.verify_case1(ho_small, p, u0_data, 0.0)
        lhs = r.details["lhs"]
        np.testing.assert_allclose(lhs, lhs[0], rtol=1e-8)
        assert r.passed and r.margins.min() >= 0

    def test_homogeneity(self, ho_small):
        p = cf.profile("2 + sin(t)", "0.5", "Linf1", a0=1.0)
        fh = modal_forcing(ho_small, lambda t: np.cos(2 * t), ho_small.right[:, 1])
        d = est.ModeData(np.exp(-np.arange(8.0)) + 0j, 0.3 * np.ones(8) + 0j, fh)
        r1 = est.verify_case1(ho_small, p, d, 0.5)
        r2 = est.verify_case1(ho_small, p, d.scaled(7.5), 0.5)
        np.testing.assert_allclose(r2.margins, r1.margins, rtol=1e-12, atol=1e-13)

    def test_forcing_enters_rhs(self, ho_small):
        p = cf.profile("2 + sin(t)", "0.5", "Linf1", a0=1.0)
        fh = modal_forcing(ho_small, lambda t: np.ones_like(t), ho_small.right[:, 0])
        r = est.verify_case1(ho_small, p, est.ModeData(np.zeros(8, complex), np.zeros(8, complex), fh), 0.0)
        assert r.passed and r.details["rhs"] > 0

    def test_lower_bound_violation(self, ho_small, u0_data):
        p = cf.profile("1 + 0.5*cos(6*t)", "0", "Linf1", a0=1.0)
        with pytest.raises(cf.ProfileError):
            est.verify_case1(ho_small, p, u0_data)

    def test_wrong_tag(self, ho_small, u0_data):
        with pytest.raises(cf.ProfileError):
            est.verify_case1(ho_small, cf.profile("t**2", tag="Smooth", l=2), u0_data)


class TestCase2:
    P = ("2 + pow(abs(sin(t)), 0.5)",)

    def profile(self):
        return cf.profile(self.P[0], "0", "HolderNondeg", a0=2.0, alpha=0.5)

    def test_passes_in_scope(self, ho_small):
        r1 = est.verify_case2(ho_small, self.profile(), gevrey(ho_small, 1.5), 1.5)
        r0 = est.verify_case2(ho_small, self.profile(), gevrey(ho_small, 1.0), 1.0)
        assert r1.passed and r0.passed
        assert r1.scope == r0.scope == "in scope"
        assert r0.margins.min() >= r1.margins.min()
        assert r1.constants["threshold"] == pytest.approx(2.0)
        assert r1.growth_exponent <= est.GROWTH_SLACK * r1.envelope_rate

    def test_monotone_w(self, ho_small):
        r = est.verify_case2(ho_small, self.profile(), gevrey(ho_small, 1.5), 1.5)
        assert r.details["W_monotone"].all()
        assert r.details["bound_with_corrected_b0"].all()

    def test_constant_coefficient_growth_is_flat(self, ho_small):
        p = cf.profile("3 + 0*t", "0", "HolderNondeg", a0=3.0, alpha=0.5)
        # √a constant: mollified root is exact and the Hölder constant vanishes
        r = est.verify_case2(ho_small, p, gevrey(ho_small, 1.5), 1.5)
        assert r.passed
        # |V| only oscillates inside the energy sandwich: growth ≤ log √(sup/inf of {a, 1})
        assert np.all(r.details["growth"] <= 0.5 * np.log(3.0) + 1e-9)
        assert r.growth_exponent < 0.5 * r.envelope_rate

    def test_outside_scope_is_labelled(self, ho_small):
        r = est.verify_case2(ho_small, self.profile(), gevrey(ho_small, 2.5), 2.5)
        assert r.scope == "outside theorem scope"

    def test_preconditions(self, ho_small):
        with pytest.raises(ValueError):
            est.verify_case2(ho_small, cf.profile("2", tag="HolderNondeg", a0=2.0, alpha=1.0),
                             gevrey(ho_small, 1.5), 1.5)
        with pytest.raises(cf.ProfileError):
            est.verify_case2(ho_small, cf.profile("2", tag="Linf1", a0=2.0), gevrey(ho_small, 1.5), 1.5)


class TestCase3:
    def test_t_squared(self, ho_small):
        p = cf.profile("t**2", "0", "Smooth", l=2)
        r = est.verify_case3(ho_small, p, gevrey(ho_small, 1.5), 1.5)
        assert r.passed
        assert r.details["commutator"] and r.details["sandwich"]
        assert r.constants["sigma"] == 2
        assert r.constants["C0_fitted"] <= r.constants["C0"]
        assert r.growth_exponent <= est.GROWTH_SLACK * r.envelope_rate

    def test_zero_coefficient(self, ho_small):
        r = est.verify_case3(ho_small, cf.profile("0", "0", "Smooth", l=2), gevrey(ho_small, 1.5), 1.5)
        assert r.details["sandwich"]
        assert r.passed

    def test_commutator_terms(self, ho_small):
        r = est.verify_case3(ho_small, cf.profile("t**2", "0", "Smooth", l=2), gevrey(ho_small, 1.5), 1.5)
        assert np.all(r.details["commutator_lhs"] <= r.details["commutator_rhs"] * (1 + 1e-12))

    def test_smoothness_precondition(self, ho_small):
        with pytest.raises(ValueError):
            est.verify_case3(ho_small, cf.profile("t**2", tag="Smooth", l=1), gevrey(ho_small, 1.5), 1.5)


class TestCase4:
    def test_abs_sin(self, ho_small):
        p = cf.profile("abs(sin(t))", "0", "HolderDeg", alpha=1.0)
        r = est.verify_case4(ho_small, p, gevrey(ho_small, 1.2), 1.2)
        assert r.passed and r.scope == "in scope"
        assert r.constants["threshold"] == pytest.approx(1.5)
        assert r.growth_exponent <= est.GROWTH_SLACK * r.envelope_rate

    def test_agrees_with_case3_on_t_squared(self, ho_small):
        d = gevrey(ho_small, 1.5)
        r3 = est.verify_case3(ho_small, cf.profile("t**2", "0", "Smooth", l=2), d, 1.5)
        r4 = est.verify_case4(ho_small, cf.profile("t**2", "0", "HolderDeg", alpha=1.99), d, 1.5)
        assert r3.passed == r4.passed
        assert r4.scope == "in scope"

    @pytest.mark.parametrize("alpha", [2.0, 2.5, 0.0])
    def test_alpha_precondition(self, ho_small, alpha):
        with pytest.raises(ValueError):
            est.verify_case4(ho_small, cf.profile("t**2", tag="HolderDeg", alpha=alpha), gevrey(ho_small, 1.2), 1.2)


def test_reports_are_reproducible(ho_small):
    p = cf.profile("abs(sin(t))", "0", "HolderDeg", alpha=1.0)
    a = est.verify_case4(ho_small, p, gevrey(ho_small, 1.2), 1.2)
    b = est.verify_case4(ho_small, p, gevrey(ho_small, 1.2), 1.2)
    assert a.passed == b.passed
    np.testing.assert_array_equal(a.margins, b.margins)
    assert a.summary() == b.summary()


def test_summary_fields(ho_small, u0_data):
    r = est.verify_case1(ho_small, cf.profile("2 + sin(t)", "0.5", "Linf1", a0=1.0), u0_data)
    s = r.summary()
    assert {"case", "passed", "scope", "min_margin", "C"} <= set(s)


def test_gevrey_data_shape(ho_small):
    d = est.ModeData.gevrey(ho_small, 2.0, 1.5, 1.0, 0.5)
    np.testing.assert_allclose(d.v0hat, np.exp(-2 * ho_small.weights ** (1 / 1.5)))
    np.testing.assert_allclose(d.v1hat, 0.5 * d.v0hat)
