import math

import numpy as np
import pytest

from nhwave import coeffs as cf
from nhwave import veryweak as vw
from nhwave.estimates import ModeData

EPS = vw.DEFAULT_EPS
EPS_SHORT = tuple(2.0 ** -k for k in range(3, 9))


@pytest.fixture(scope="module")
def u0(ho_small):
    return ModeData.from_functions(ho_small, v0=ho_small.right[:, 0])


@pytest.fixture(scope="module")
def zero(ho_small):
    return ModeData(np.zeros(8, complex), np.zeros(8, complex))


REG = cf.profile("2 + sin(t)", "0.5", "Linf1", a0=1.0)


class TestClassify:
    e = np.array(EPS)

    def test_power_law_is_moderate(self):
        c = vw.classify_net(self.e, 1 / self.e)
        assert c.kind == "moderate" and c.N == 1
        assert c.slope == pytest.approx(-1.0, abs=1e-6)
        assert c.verdict == "moderate(1)"

    def test_bounded_is_moderate_zero(self):
        c = vw.classify_net(self.e, 3 + self.e)
        assert c.kind == "moderate" and c.N == 0

    def test_super_polynomial_decay_is_negligible(self):
        c = vw.classify_net(self.e, np.exp(-1 / self.e))
        assert c.kind == "negligible" and c.certified_q == vw.Q_MAX

    def test_oscillation_is_indeterminate(self):
        assert vw.classify_net(self.e, np.abs(np.sin(1 / self.e))).kind == "indeterminate"

    def test_power_decay_is_not_negligible(self):
        c = vw.classify_net(self.e, self.e ** 3)
        assert c.kind == "moderate" and c.N == 0

    def test_all_zero_and_floor(self):
        assert vw.classify_net(self.e, np.zeros(10)).kind == "negligible"
        assert vw.classify_net(self.e, np.full(10, 1e-20), floor=1e-18).kind == "negligible"

    def test_input_errors(self):
        with pytest.raises(ValueError):
            vw.classify_net(self.e[:4], self.e[:4])
        with pytest.raises(ValueError):
            vw.classify_net(self.e, -self.e)
        with pytest.raises(ValueError):
            vw.classify_net(self.e, np.full(10, np.inf))


class TestScale:
    def test_dirac(self):
        s = vw.calibrate_scale(cf.profile([1.0, cf.dirac(0.5)], tag="Distributional"))
        assert (s.L1, s.L) == (1, 2)
        assert s.C >= 4
        assert s.inputs["c0"] > 0

    def test_regular(self):
        s = vw.calibrate_scale(REG)
        assert (s.L1, s.L) == (0, 1)

    def test_dirac_prime(self):
        p = cf.profile([1.0, cf.dirac_prime(0.5)], tag="Distributional")
        s = vw.calibrate_scale(p)
        assert (s.L1, s.L) == (2, 3)
        net = cf.mollify_net(p, cf.Mollifier(), EPS, np.linspace(0, 1, 2 ** 14 + 1))
        assert cf.loglog_slope(net.omega, np.max(np.abs(net.a), axis=1)) == pytest.approx(-2, abs=0.05)

    def test_explicit_C_and_log_rule(self):
        s = vw.calibrate_scale(REG, C=10.0)
        assert s.C == 10.0
        m = s.mollifier()
        np.testing.assert_allclose(m.omega(np.array(EPS)), s.omega(np.array(EPS)))
        assert np.all(np.diff(m.omega(np.array(EPS))) < 0)


class TestSolveNet:
    def test_constant_profile_gives_constant_net(self, ho_small, u0):
        p = cf.profile("1", "0", "Linf1", a0=1.0)
        net = vw.solve_net(ho_small, p, cf.Mollifier(), u0, 0.0, EPS_SHORT)
        np.testing.assert_allclose(net.norm_v, net.norm_v[0], rtol=1e-6)

    def test_zero_data(self, ho_small, zero):
        p = cf.profile([1.0, cf.dirac(0.5)], tag="Distributional")
        net = vw.solve_net(ho_small, p, cf.Mollifier(), zero, 0.0, EPS_SHORT)
        assert np.all(net.norm_v == 0) and np.all(net.norm_vt == 0)

    def test_threads_do_not_change_results(self, ho_small, u0):
        p = cf.profile([1.0, cf.dirac(0.5)], tag="Distributional")
        a = vw.solve_net(ho_small, p, cf.Mollifier(), u0, 0.0, EPS_SHORT)
        b = vw.solve_net(ho_small, p, cf.Mollifier(), u0, 0.0, EPS_SHORT, threads=3)
        np.testing.assert_array_equal(a.norm_v, b.norm_v)
        np.testing.assert_array_equal(a.n_steps, b.n_steps)

    def test_keep_traces(self, ho_small, u0):
        net = vw.solve_net(ho_small, REG, cf.Mollifier(), u0, 0.0, EPS_SHORT[:2], keep_traces=True)
        assert len(net.traces) == 2 and net.traces[0].V.shape[0] == 8

    def test_empty(self, ho_small, u0):
        with pytest.raises(ValueError):
            vw.solve_net(ho_small, REG, cf.Mollifier(), u0, 0.0, [])


def test_existence_with_dirac(ho_small, u0):
    p = cf.profile([1.0, cf.dirac(0.5)], tag="Distributional")
    r = vw.existence_experiment(ho_small, p, u0, 0.0, EPS)
    assert r.slope_ok
    assert r.coefficient_slopes[0] == pytest.approx(-1, abs=0.05)
    assert r.coefficient_slopes[1] == pytest.approx(-2, abs=0.05)
    assert r.lower_bound >= 1 - 1e-12
    assert r.classification.kind == "moderate"
    assert r.passed


class TestUniqueness:
    def test_identical_mollifiers(self, ho_small, u0):
        r = vw.uniqueness_experiment(ho_small, REG, u0, 0.0, EPS)
        assert np.all(r.difference_norms == 0)
        assert r.verdict == "unique"

    def test_negligible_perturbation(self, ho_small, u0):
        r = vw.uniqueness_experiment(ho_small, REG, u0, 0.0, EPS, perturbation=lambda e: math.exp(-1 / e))
        assert r.hypothesis.kind == "negligible"
        assert r.difference.kind == "negligible"
        assert r.difference.certified_q == 6
        assert r.passed

    def test_moderate_perturbation_fails_hypothesis(self, ho_small, u0):
        r = vw.uniqueness_experiment(ho_small, REG, u0, 0.0, EPS, perturbation=lambda e: e)
        assert r.difference.kind != "negligible"
        assert r.verdict == "hypothesis failure"
        assert not r.passed

    def test_different_bump_is_not_negligible(self, ho_small, u0):
        r = vw.uniqueness_experiment(ho_small, REG, u0, 0.0, EPS, alt_mollifier=cf.Mollifier(beta=0.25))
        assert r.verdict == "hypothesis failure"


class TestConsistency:
    def test_reference(self, ho_small, u0):
        r = vw.consistency_experiment(ho_small, REG, u0, 0.0, EPS)
        assert r.tail_decreasing and r.final_relative <= 1e-4
        assert r.order == pytest.approx(1.0, abs=0.1)
        assert r.passed

    def test_constant_profile(self, ho_small, u0):
        r = vw.consistency_experiment(ho_small, cf.profile("2", "0.5", "Linf1", a0=2.0), u0, 0.0, EPS)
        assert np.all(r.differences <= 1e-12 * r.reference_norm)
        assert r.passed

    def test_zero_data(self, ho_small, zero):
        r = vw.consistency_experiment(ho_small, REG, zero, 0.0, EPS)
        assert np.all(r.differences == 0) and r.reference_norm == 0
        assert r.passed

    def test_needs_regular_profile(self, ho_small, u0):
        with pytest.raises(cf.ProfileError):
            vw.consistency_experiment(ho_small, cf.profile("t**2", tag="Smooth", l=2), u0)
