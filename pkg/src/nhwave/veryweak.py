"""Nets of regularized problems for distributional coefficients.

For each ε the coefficients are mollified at scale ``ω(ε)`` and every mode
is integrated; the resulting families of norms are classified as moderate
(bounded by ``ε^{-N}``) or negligible (smaller than every ``ε^q`` that a
finite grid can test).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import coeffs as cf
from .coeffs import CoefficientProfile, Mollifier, ProfileError
from .estimates import ModeData
from .evolution import DEFAULT_CFL, ModeSystem, choose_steps, initial_state, integrate_mode, stage_grid
from .operator import EigenSystem

log = logging.getLogger(__name__)

Q_MAX = 6.0
RESID_TOL = 0.1
DEFAULT_EPS = tuple(2.0 ** -k for k in range(3, 13))


@dataclass(frozen=True)
class NetClassification:
    kind: str
    slope: float
    N: int | None
    residual: float
    certified_q: float | None = None

    @property
    def verdict(self) -> str:
        return f"moderate({self.N})" if self.kind == "moderate" else self.kind


def classify_net(eps, norms, q_max: float = Q_MAX, floor: float = 0.0,
                 resid_tol: float = RESID_TOL) -> NetClassification:
    """Classify ``ε ↦ norms`` from a least-squares fit on log-log axes.

    Values at or below ``floor`` count as zero.  The net is negligible when,
    over the finest half of the grid, every consecutive pair is zero-zero,
    nonzero-zero, or falls at least as fast as ``ε^{q_max}``.  A net that is
    non-monotone and also fits a power law badly is indeterminate.
    """
    e = np.asarray(eps, dtype=float)
    n = np.asarray(norms, dtype=float)
    if e.size < 5 or e.size != n.size:
        raise ValueError("need at least 5 (ε, norm) pairs of equal length")
    if np.any(~np.isfinite(n)) or np.any(n < 0):
        raise ValueError("norms must be finite and nonnegative")
    order = np.argsort(-e)
    e, n = e[order], n[order]
    live = n > floor
    if not np.any(live):
        return NetClassification("negligible", math.inf, None, 0.0, q_max)

    fine = np.arange(e.size // 2, e.size)
    neg = True
    for i, j in zip(fine[:-1], fine[1:]):
        if not live[i]:
            if live[j]:
                neg = False
                break
            continue
        if not live[j]:
            continue
        if math.log(n[j] / n[i]) / math.log(e[j] / e[i]) < q_max:
            neg = False
            break
    x, y = np.log(e[live]), np.log(n[live])
    if x.size >= 2:
        coef = np.polyfit(x, y, 1)
        slope = float(coef[0])
        resid = float(np.sqrt(np.mean((y - np.polyval(coef, x)) ** 2)))
    else:
        slope, resid = math.inf, 0.0
    if neg:
        return NetClassification("negligible", slope, None, resid, q_max)
    d = np.diff(n)
    monotone = bool(np.all(d >= 0) or np.all(d <= 0))
    if not monotone and resid > resid_tol:
        return NetClassification("indeterminate", slope, None, resid)
    return NetClassification("moderate", slope, int(math.ceil(max(0.0, -slope) - 1e-6)), resid)


@dataclass(frozen=True, eq=False)
class SolutionNet:
    """Per-ε norms ``‖v_ε‖_{L²H^{1+s}}`` and ``‖∂_t v_ε‖_{L²H^s}`` of the regularized solves."""

    eps: np.ndarray
    omega: np.ndarray
    norm_v: np.ndarray
    norm_vt: np.ndarray
    n_steps: np.ndarray
    blowup: np.ndarray
    s: float
    traces: list | None = None


@dataclass(frozen=True)
class CalibratedScale:
    L1: int
    L2: int
    L: int
    C: float
    inputs: dict = field(default_factory=dict)

    def omega(self, eps):
        """``ω(ε) = (log ε^{-L/C})^{-1/L}``."""
        eps = np.asarray(eps, dtype=float)
        return ((self.L / self.C) * np.log(1.0 / eps)) ** (-1.0 / self.L)

    def mollifier(self, beta: float = 1.0) -> Mollifier:
        return Mollifier(beta=beta, rule="log", L=float(self.L), C=float(self.C))


def _map(fn, items, threads: int = 1) -> list:
    """Order-preserving map, optionally over a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _l2t(y, t) -> float:
    return float(math.sqrt(max(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)), 0.0)))


def _net_steps(p, m, omega, w_max, cfl, a_sup_fn) -> int:
    # resolve both the oscillation and the ω-scale structure of the mollified atoms
    cap = omega / 8 if not p.is_regular else None
    return choose_steps(p.T, w_max, math.sqrt(max(a_sup_fn(), 0.0)), cfl, cap)


def _solve_one(E, p, m, omega, data, cfl, a_shift=None, n_steps=None):
    """Integrate all modes with ``a_ω = a ∗ ψ_ω`` (+ optional additive shift)."""
    w = E.weights
    if n_steps is None:
        tt = np.linspace(0, p.T, 8001)
        probe = cf.mollify_coefficient(p.a, m, omega, tt, p.T)[0]
        if a_shift is not None:
            probe = probe + a_shift(tt)
        n_steps = _net_steps(p, m, omega, float(w.max()), cfl, lambda: float(np.max(probe)))
    ts = stage_grid(p.T, n_steps)
    a = cf.mollify_coefficient(p.a, m, omega, ts, p.T)[0]
    q = cf.mollify_coefficient(p.q, m, omega, ts, p.T)[0]
    if a_shift is not None:
        a = a + a_shift(ts)
    f = None if data.f is None else np.asarray(data.f(ts), dtype=complex)
    sys = ModeSystem(np.arange(E.n_modes), w, E.abs_lambda, ts, a, q, f)
    return integrate_mode(sys, initial_state(w, data.v0hat, data.v1hat)), n_steps


def _classical(E, p, data, cfl, n_steps):
    ts = stage_grid(p.T, n_steps)
    a, q = cf.sample_profile(p, ts)
    f = None if data.f is None else np.asarray(data.f(ts), dtype=complex)
    sys = ModeSystem(np.arange(E.n_modes), E.weights, E.abs_lambda, ts, a, q, f)
    return integrate_mode(sys, initial_state(E.weights, data.v0hat, data.v1hat))


def _norms(V, w, t, s):
    ws = w[:, None] ** (2 * s)
    nv = _l2t(np.sum(ws * np.abs(V[..., 0]) ** 2, axis=0), t)   # ⟨ξ⟩^{2s}|V1|² = ⟨ξ⟩^{2+2s}|v̂|²
    nvt = _l2t(np.sum(ws * np.abs(V[..., 1]) ** 2, axis=0), t)
    return nv, nvt


def solve_net(E: EigenSystem, p: CoefficientProfile, m: Mollifier, data: ModeData, s: float = 0.0,
              eps_list: Sequence[float] = DEFAULT_EPS, cfl: float = DEFAULT_CFL,
              keep_traces: bool = False, threads: int = 1) -> SolutionNet:
    eps = np.asarray(list(eps_list), dtype=float)
    if eps.size == 0:
        raise ValueError("empty ε list")
    omega = np.atleast_1d(m.omega(eps))

    def one(om):
        tr, n = _solve_one(E, p, m, float(om), data, cfl)
        if tr.blown_up:
            log.warning("blow-up at ω=%g", om)
            return math.inf, math.inf, n, True, (tr if keep_traces else None)
        a, b = _norms(tr.V, E.weights, tr.t, s)
        return a, b, n, False, (tr if keep_traces else None)

    rows = _map(one, omega, threads)
    return SolutionNet(eps, omega, np.array([r[0] for r in rows]), np.array([r[1] for r in rows]),
                       np.array([r[2] for r in rows]), np.array([r[3] for r in rows]), s,
                       [r[4] for r in rows] if keep_traces else None)


def calibrate_scale(p: CoefficientProfile, eps_coarse: float = DEFAULT_EPS[0],
                    mollifier: Mollifier | None = None, C: float | None = None) -> CalibratedScale:
    """Orders ``L₁``, ``L₂`` of the atoms of ``a``, ``q``, ``L = max(L₁+1, L₂)`` and the
    Gronwall constant ``C = 4 max(c₀T, 1)`` of the problem mollified at the coarsest ε.

    ``c₀`` is the coefficient of the structure bound
    ``c′ ≤ c₀ (1 + ω^{-L₁-1} + ω^{-L₁} + ω^{-L₂})``.
    """
    for atom in p.a.atoms + p.q.atoms:
        if atom.kind not in cf.ATOM_ORDER:
            raise ProfileError(f"unsupported atom kind {atom.kind!r}")
    L1, L2 = p.a.order, p.q.order
    L = max(L1 + 1, L2)
    m = mollifier or Mollifier()
    om = float(eps_coarse)
    t = np.linspace(0, p.T, 8001)
    a, da = cf.mollify_coefficient(p.a, m, om, t, p.T)
    q, _ = cf.mollify_coefficient(p.q, m, om, t, p.T)
    cprime = 1 + np.max(np.abs(da)) + 2 * np.max(np.abs(a)) + np.max(np.abs(q))
    c0 = float(cprime / (1 + om ** (-L1 - 1) + om ** (-L1) + om ** (-L2)))
    Cval = 4 * max(c0 * p.T, 1.0) if C is None else float(C)
    log.info("calibrated scale: L1=%d L2=%d L=%d c0=%.6g C=%.6g", L1, L2, L, c0, Cval)
    return CalibratedScale(L1, L2, L, Cval, {"c_prime": float(cprime), "c0": c0, "omega_coarse": om})


@dataclass(frozen=True, eq=False)
class ExistenceReport:
    coefficient_slopes: dict
    expected_slopes: dict
    slope_ok: bool
    lower_bound: float
    lower_bound_ok: bool
    net: SolutionNet
    classification: NetClassification
    scale: CalibratedScale

    @property
    def passed(self) -> bool:
        return self.slope_ok and self.lower_bound_ok and self.classification.kind == "moderate"


def existence_experiment(E: EigenSystem, p: CoefficientProfile, data: ModeData, s: float = 0.0,
                         eps_list: Sequence[float] = DEFAULT_EPS, rule: str = "identity",
                         cfl: float = DEFAULT_CFL, slope_tol: float = 0.05,
                         C: float | None = None, threads: int = 1) -> ExistenceReport:
    """Coefficient-net structure slopes, the ``a_ε`` lower bound and moderateness of ``v_ε``."""
    eps = np.asarray(list(eps_list), dtype=float)
    scale = calibrate_scale(p, float(eps.max()), C=C)
    m0 = Mollifier()
    t = np.linspace(0, p.T, 40001)
    cnet = cf.mollify_net(p, m0, eps, t)
    slopes = {0: cf.loglog_slope(cnet.omega, np.max(np.abs(cnet.a), axis=1)),
              1: cf.loglog_slope(cnet.omega, np.max(np.abs(cnet.da), axis=1))}
    expected = {0: -float(scale.L1), 1: -float(scale.L1 + 1)} if scale.L1 else {0: 0.0, 1: 0.0}
    if scale.L1:
        ok = all(abs(slopes[k] - expected[k]) <= slope_tol for k in (0, 1))
    else:
        ok = True
    lb = float(cnet.a.min())
    m = m0 if rule == "identity" else scale.mollifier()
    net = solve_net(E, p, m, data, s, eps, cfl, threads=threads)
    cls = classify_net(eps, net.norm_v)
    return ExistenceReport(slopes, expected, ok, lb, lb > 0, net, cls, scale)


@dataclass(frozen=True, eq=False)
class UniquenessReport:
    eps: np.ndarray
    hypothesis_norms: np.ndarray
    hypothesis: NetClassification
    difference_norms: np.ndarray
    difference: NetClassification
    floor: np.ndarray

    @property
    def hypothesis_ok(self) -> bool:
        return self.hypothesis.kind == "negligible"

    @property
    def verdict(self) -> str:
        if not self.hypothesis_ok:
            return "hypothesis failure"
        return "unique" if self.difference.kind == "negligible" else "not unique"

    @property
    def passed(self) -> bool:
        return self.verdict == "unique"


def uniqueness_experiment(E: EigenSystem, p: CoefficientProfile, data: ModeData, s: float = 0.0,
                          eps_list: Sequence[float] = DEFAULT_EPS, mollifier: Mollifier | None = None,
                          alt_mollifier: Mollifier | None = None,
                          perturbation: Callable[[float], float] | None = None,
                          cfl: float = DEFAULT_CFL, q_max: float = Q_MAX,
                          floor_rel: float = 1e-12, threads: int = 1) -> UniquenessReport:
    """Solve two nets differing by a coefficient perturbation and classify the difference.

    The second net uses ``alt_mollifier`` (if given) and adds ``perturbation(ε)``
    to ``a``.  The hypothesis net is ``‖Δa_ε‖_∞ + ‖∂_t Δa_ε‖_∞``.  Norms below
    ``floor_rel · ‖v_ε‖`` are treated as rounding noise.
    """
    m1 = mollifier or Mollifier()
    m2 = alt_mollifier or m1
    eps = np.asarray(list(eps_list), dtype=float)

    def one(e):
        om1 = float(m1.omega(e))
        om2 = float(m2.omega(e))
        shift = None
        dval = 0.0 if perturbation is None else float(perturbation(e))
        if perturbation is not None:
            shift = lambda t, _d=dval: np.full_like(np.asarray(t, float), _d)
        tr1, n = _solve_one(E, p, m1, om1, data, cfl)
        if shift is None:
            probe_n = n
        else:
            probe_n = max(n, _solve_steps(E, p, m2, om2, cfl, shift))
        if probe_n != n:
            tr1, n = _solve_one(E, p, m1, om1, data, cfl, n_steps=probe_n)
        tr2, _ = _solve_one(E, p, m2, om2, data, cfl, a_shift=shift, n_steps=n)
        a1, d1 = cf.mollify_coefficient(p.a, m1, om1, tr1.t, p.T)
        a2, d2 = cf.mollify_coefficient(p.a, m2, om2, tr1.t, p.T)
        h = float(np.max(np.abs(a2 + dval - a1)) + np.max(np.abs(d2 - d1)))
        dv, _ = _norms(tr2.V - tr1.V, E.weights, tr1.t, s)
        ref, _ = _norms(tr1.V, E.weights, tr1.t, s)
        return h, dv, floor_rel * ref, float(np.max(np.abs(a1)))

    rows = _map(one, eps, threads)
    hyp = [r[0] for r in rows]
    diff = [r[1] for r in rows]
    floors = [r[2] for r in rows]
    a_scale = max(r[3] for r in rows)
    hyp, diff, floors = np.array(hyp), np.array(diff), np.array(floors)
    # rounding in the two quadratures leaves ~1e-15 relative noise in Δa_ε
    hcls = classify_net(eps, hyp, q_max, floor=1e-13 * (1 + a_scale))
    dcls = classify_net(eps, np.where(diff <= floors, 0.0, diff), q_max)
    return UniquenessReport(eps, hyp, hcls, diff, dcls, floors)


def _solve_steps(E, p, m, omega, cfl, shift):
    tt = np.linspace(0, p.T, 8001)
    probe = cf.mollify_coefficient(p.a, m, omega, tt, p.T)[0] + shift(tt)
    return _net_steps(p, m, omega, float(E.weights.max()), cfl, lambda: float(np.max(probe)))


@dataclass(frozen=True, eq=False)
class ConsistencyReport:
    eps: np.ndarray
    differences: np.ndarray
    reference_norm: float
    order: float
    tail_decreasing: bool
    final_relative: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.tail_decreasing and self.final_relative <= self.tol


def consistency_experiment(E: EigenSystem, p: CoefficientProfile, data: ModeData, s: float = 0.0,
                           eps_list: Sequence[float] = DEFAULT_EPS, mollifier: Mollifier | None = None,
                           cfl: float = DEFAULT_CFL, tol: float = 1e-4,
                           threads: int = 1) -> ConsistencyReport:
    """``‖v_ε - v‖_{L²H^{1+s}}`` against ε for a regular profile, with ``ω(ε) = ε``."""
    if p.tag != "Linf1":
        raise ProfileError(f"consistency needs a regular Linf1 profile, got {p.tag}")
    p.check()
    m = mollifier or Mollifier()
    tt = np.linspace(0, p.T, 8001)
    n = choose_steps(p.T, float(E.weights.max()), math.sqrt(float(np.max(p.a(tt)))), cfl)
    ref = _classical(E, p, data, cfl, n)
    ref_norm, _ = _norms(ref.V, E.weights, ref.t, s)
    eps = np.asarray(list(eps_list), dtype=float)

    def one(e):
        tr, _ = _solve_one(E, p, m, float(m.omega(e)), data, cfl, n_steps=n)
        return _norms(tr.V - ref.V, E.weights, ref.t, s)[0]

    diffs = np.array(_map(one, eps, threads))
    order_idx = np.argsort(-eps)
    d_sorted = diffs[order_idx]
    tail = d_sorted[-4:]
    decreasing = bool(np.all(np.diff(tail) < 0) or np.all(tail == 0))
    live = diffs > 0
    order = cf.loglog_slope(eps[live], diffs[live]) if live.sum() >= 2 else float("nan")
    rel = float(d_sorted[-1] / ref_norm) if ref_norm > 0 else 0.0
    return ConsistencyReport(eps, diffs, ref_norm, order, decreasing, rel, tol)
