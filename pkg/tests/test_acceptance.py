"""Acceptance suite: one test per criterion, each at its stated tolerance.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import math

import numpy as np
import pytest

from nhwave import cli
from nhwave import coeffs as cf
from nhwave import estimates as est
from nhwave import evolution as ev
from nhwave import veryweak as vw
from nhwave.nhfourier import forward, inverse, parseval_pairing
from nhwave.operator import assemble_operator, build_grid, compute_eigensystem, harmonic

EPS = vw.DEFAULT_EPS
CASE1 = cf.profile("2 + sin(t)", "0.5", "Linf1", T=1.0, a0=1.0)


@pytest.fixture(scope="module")
def u0(ho20):
    return est.ModeData.from_functions(ho20, v0=ho20.right[:, 0])


def test_01_spectral_oracle(cx20, acceptance_record):
    E = compute_eigensystem(assemble_operator(build_grid(12, 481), harmonic()), 10)
    err = float(np.max(np.abs(E.eigenvalues - (2 * np.arange(10) + 1))))
    bi = float(np.max(np.abs(cx20.biorthogonality() - np.eye(20))))
    ok = err <= 1e-6 and bi <= 1e-6
    acceptance_record("1", "spectral oracle", ok, f"max|λ-(2ξ+1)|={err:.2e} biorth={bi:.2e}")
    assert ok


def test_02_plancherel(ho20, cx20, acceptance_record):
    rng = np.random.default_rng(2)
    worst_p = worst_r = 0.0
    for E in (ho20, cx20):
        for _ in range(100):
            f = E.right @ (rng.standard_normal(20) + 1j * rng.standard_normal(20))
            nf2 = E.grid.norm(f) ** 2
            c = forward(f, E)
            worst_p = max(worst_p, abs(parseval_pairing(c, c) - nf2) / nf2)
            worst_r = max(worst_r, E.grid.norm(inverse(c).values - f) / math.sqrt(nf2))
    ok = worst_p <= 1e-10 and worst_r <= 1e-10
    acceptance_record("2", "Plancherel and round trip", ok, f"pairing={worst_p:.2e} round-trip={worst_r:.2e}")
    assert ok


def _scalar_solve(lam, n, v0=1.0, v1=0.4):
    w = math.sqrt(1 + lam)
    ts = ev.stage_grid(1.0, n)
    sys = ev.ModeSystem(0, w, lam, ts, np.ones(ts.size), np.zeros(ts.size))
    tr = ev.integrate_mode(sys, ev.initial_state(w, v0, v1))
    ov, odv = ev.closed_form_oracle(lam, 1.0, 0.0, v0, v1, tr.t)
    return tr.V[:, 0] / (1j * w) - ov, tr.V[:, 1] - odv


def test_03_integrator(acceptance_record):
    worst = 0.0
    for lam in (0.0, 1.0, 10.0, 100.0, 1000.0):
        n = ev.choose_steps(1.0, math.sqrt(1 + lam), 1.0)
        dv, ddv = _scalar_solve(lam, n)
        # v̂ absolute; ∂_t v̂ relative to its natural scale √|λ|
        worst = max(worst, np.max(np.abs(dv)), np.max(np.abs(ddv)) / max(1.0, math.sqrt(lam)))
    errs = [abs(_scalar_solve(100.0, n)[0][-1]) for n in (100, 200, 400)]
    order = min(math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2]))
    ok = worst <= 1e-8 and order >= 3.8
    acceptance_record("3", "integrator vs closed form", ok, f"max err={worst:.2e} order={order:.2f}")
    assert ok


def test_04_energy(ho20, acceptance_record):
    p = cf.profile("1", "1", "Linf1", a0=1.0)
    sys = ev.assemble_mode_system(ho20, np.arange(20), p)
    rng = np.random.default_rng(4)
    tr = ev.integrate_mode(sys, rng.standard_normal((20, 2)) + 1j * rng.standard_normal((20, 2)))
    E = ev.energy_trace(tr)
    drift = float(np.max(np.abs(E - E[:, :1]) / E[:, :1]))
    p2 = cf.profile("2 + sin(t)", "0.5", "Linf1", a0=1.0)
    tr2 = ev.integrate_mode(ev.assemble_mode_system(ho20, np.arange(20), p2), rng.standard_normal((20, 2)) + 0j)
    V2 = np.sum(np.abs(tr2.V) ** 2, axis=-1)
    E2 = ev.energy_trace(tr2)
    sandwich = bool(np.all(np.minimum(tr2.a, 1) * V2 <= E2 * (1 + 1e-15))
                    and np.all(E2 <= np.maximum(tr2.a, 1) * V2 * (1 + 1e-15)))
    ok = drift <= 1e-8 and sandwich
    acceptance_record("4", "energy conservation and sandwich", ok, f"drift={drift:.2e} sandwich={sandwich}")
    assert ok


def test_05_case1(ho20, u0, acceptance_record):
    r = est.verify_case1(ho20, CASE1, u0, 0.0)
    ok = r.passed and float(r.margins.min()) >= 0
    acceptance_record("5", "Case 1 estimate", ok, f"min margin={r.margins.min():.4f} C={r.constants['C']:.4g}")
    assert ok


def test_06_case2(ho20, acceptance_record):
    p = cf.profile("2 + pow(abs(sin(t)), 0.5)", "0", "HolderNondeg", a0=2.0, alpha=0.5)
    r = est.verify_case2(ho20, p, est.ModeData.gevrey(ho20, 1.0, 1.5, 1.0, 1.0), 1.5)
    rs = cf.root_estimate_slopes(p, [2.0 ** -k for k in range(3, 11)])
    slopes_ok = abs(rs["error_slope"] - 0.5) <= 0.15 and abs(rs["derivative_slope"] + 0.5) <= 0.15
    ok = r.passed and r.constants["k"] == r.constants["k0"] and r.margins.size == 20 and slopes_ok
    acceptance_record("6", "Case 2 estimate", ok,
                      f"min margin={r.margins.min():.4f} k={r.constants['k']:.3f} "
                      f"slopes=({rs['error_slope']:.3f}, {rs['derivative_slope']:.3f})")
    assert ok


def test_07_case3(ho20, acceptance_record):
    p = cf.profile("t**2", "0", "Smooth", l=2)
    r = est.verify_case3(ho20, p, est.ModeData.gevrey(ho20, 1.0, 1.5, 1.0, 1.0), 1.5)
    mix = est.ModeData.from_functions(ho20, v0=ho20.right[:, 0], v1=ho20.right[:, 1])
    r2 = est.verify_case3(ho20, p, mix, 1.5)
    comm = bool(np.all(r.details["commutator_lhs"] <= r.details["commutator_rhs"] * (1 + 1e-12)))
    ok = r.passed and r2.passed and comm and r.constants["sigma"] == 2 and r.margins.size == 20
    acceptance_record("7", "Case 3 estimate", ok,
                      f"min margin={min(r.margins.min(), r2.margins.min()):.4f} K00={r.constants['K00']:.3f} "
                      f"commutator={comm}")
    assert ok


def test_08_case4(ho20, acceptance_record):
    d12 = est.ModeData.gevrey(ho20, 1.0, 1.2, 1.0, 1.0)
    r = est.verify_case4(ho20, cf.profile("abs(sin(t))", "0", "HolderDeg", alpha=1.0), d12, 1.2)
    d15 = est.ModeData.gevrey(ho20, 1.0, 1.5, 1.0, 1.0)
    r4 = est.verify_case4(ho20, cf.profile("t**2", "0", "HolderDeg", alpha=1.99), d15, 1.5)
    r3 = est.verify_case3(ho20, cf.profile("t**2", "0", "Smooth", l=2), d15, 1.5)
    ok = r.passed and r.scope == "in scope" and r4.passed == r3.passed
    acceptance_record("8", "Case 4 estimate and Case 3 cross-check", ok,
                      f"min margin={r.margins.min():.4f} cross-check case3={r3.passed} case4={r4.passed}")
    assert ok


def test_09_existence(ho20, u0, acceptance_record):
    p = cf.profile([1.0, cf.dirac(0.5)], tag="Distributional")
    r = vw.existence_experiment(ho20, p, u0, 0.0, EPS)
    ok = r.slope_ok and r.classification.kind == "moderate"
    acceptance_record("9", "very weak existence", ok,
                      f"slopes={r.coefficient_slopes[0]:.4f},{r.coefficient_slopes[1]:.4f} "
                      f"net={r.classification.verdict}")
    assert ok


def test_10_uniqueness(ho20, u0, acceptance_record):
    neg = vw.uniqueness_experiment(ho20, CASE1, u0, 0.0, EPS, perturbation=lambda e: math.exp(-1 / e))
    ctl = vw.uniqueness_experiment(ho20, CASE1, u0, 0.0, EPS, perturbation=lambda e: e)
    ok = (neg.difference.kind == "negligible" and neg.difference.certified_q == 6
          and ctl.verdict == "hypothesis failure")
    acceptance_record("10", "uniqueness", ok, f"negligible run={neg.verdict} control={ctl.verdict}")
    assert ok


def test_11_consistency(ho20, u0, acceptance_record):
    r = vw.consistency_experiment(ho20, CASE1, u0, 0.0, EPS)
    ok = r.tail_decreasing and r.final_relative <= 1e-4
    acceptance_record("11", "consistency", ok, f"final relative={r.final_relative:.2e} order={r.order:.2f}")
    assert ok


def test_12_determinism(tmp_path, acceptance_record):
    mismatched = []
    for name, argv in cli.REFERENCE.items():
        outs = []
        for k in range(2):
            d = tmp_path / f"{name}_{k}"
            cli.main(argv + ["--config", f"builtin:{name}", "--out", str(d)])
            outs.append(d)
        files = sorted(p.name for p in outs[0].glob("*.csv"))
        if not files:
            mismatched.append(f"{name}: no CSV")
        for f in files:
            if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes():
                mismatched.append(f"{name}/{f}")
    ok = not mismatched
    acceptance_record("12", "determinism", ok, f"{len(cli.REFERENCE)} reference configs"
                      + (f" mismatched: {mismatched}" if mismatched else ""))
    assert ok
