"""Per-mode first-order systems and their time integration.

Projecting ``u_tt + a(t) H u + q(t) u = f`` onto mode ``ξ`` gives

    v̂'' + (|λ_ξ| a + q) v̂ = f̂,

and with ``V = (i⟨ξ⟩ v̂, ∂_t v̂)``

    ∂_t V = i⟨ξ⟩ A V + i⟨ξ⟩^{-1} Q V + F,
    A = [[0, 1], [a, 0]],  Q = [[0, 0], [q - a, 0]],  F = (0, f̂).

Everything here is vectorized over modes sharing one time grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .coeffs import CoefficientProfile, sample_profile
from .operator import EigenSystem

BLOWUP = 1e12
DEFAULT_CFL = 0.01
MIN_STEPS = 200


def choose_steps(T: float, weight: float, sup_root_a: float, cfl: float = DEFAULT_CFL,
                 h_cap: float | None = None) -> int:
    """Number of fixed steps: ``h = min(T/200, cfl / (⟨ξ⟩ max(1, sup √a)))``,
    optionally capped by ``h_cap``."""
    n = max(MIN_STEPS, math.ceil(T * weight * max(1.0, sup_root_a) / cfl))
    if h_cap is not None:
        n = max(n, math.ceil(T / h_cap))
    return int(n)


@dataclass(frozen=True, eq=False)
class ModeSystem:
    """Coefficients of one or more modes sampled on the stage grid.

    ``t_stage`` has ``2N + 1`` points; the step grid is ``t_stage[::2]`` and
    the odd entries are the RK4 half steps.  ``weight`` and ``abs_lambda``
    may be scalars (one mode) or arrays of shape ``(M,)``; ``f`` then has
    shape ``(2N+1,)`` or ``(M, 2N+1)``.
    """

    xi: int | np.ndarray
    weight: float | np.ndarray
    abs_lambda: float | np.ndarray
    t_stage: np.ndarray
    a: np.ndarray
    q: np.ndarray
    f: np.ndarray | None = None

    def __post_init__(self):
        if self.t_stage.size < 3 or self.t_stage.size % 2 == 0:
            raise ValueError("stage grid must have 2N+1 >= 3 points")
        if np.any(np.diff(self.t_stage) <= 0):
            raise ValueError("time grid must be strictly increasing")
        for name in ("a", "q"):
            if np.shape(getattr(self, name))[-1] != self.t_stage.size:
                raise ValueError(f"{name} must be sampled on the stage grid")
        if self.f is not None and np.shape(self.f)[-1] != self.t_stage.size:
            raise ValueError("forcing must be sampled on the stage grid")

    @property
    def t(self) -> np.ndarray:
        return self.t_stage[::2]

    @property
    def n_steps(self) -> int:
        return (self.t_stage.size - 1) // 2

    @property
    def A(self) -> np.ndarray:
        """``A(t)`` on the step grid, shape ``(N+1, 2, 2)``."""
        a = np.asarray(self.a)[..., ::2]
        out = np.zeros(a.shape + (2, 2))
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = a
        return out

    @property
    def Q(self) -> np.ndarray:
        a = np.asarray(self.a)[..., ::2]
        q = np.asarray(self.q)[..., ::2]
        out = np.zeros(a.shape + (2, 2))
        out[..., 1, 0] = q - a
        return out


@dataclass(frozen=True, eq=False)
class ModeTrace:
    """``V(t, ξ)`` on the step grid with the energy used to monitor it.

    ``V`` has shape ``(N+1, 2)`` for one mode or ``(M, N+1, 2)`` for a sweep.
    ``blowup_step`` is -1 where no component exceeded the blow-up threshold.
    """

    t: np.ndarray
    V: np.ndarray
    energy: np.ndarray
    functional: str
    a: np.ndarray
    weight: float | np.ndarray
    xi: int | np.ndarray
    blowup_step: int | np.ndarray = -1

    @property
    def blown_up(self) -> bool:
        return bool(np.any(np.asarray(self.blowup_step) >= 0))

    def mode(self, k: int) -> "ModeTrace":
        """Single-mode view of a sweep trace."""
        return ModeTrace(self.t, self.V[k], self.energy[k], self.functional, self.a,
                         np.asarray(self.weight)[k], np.asarray(self.xi)[k],
                         int(np.asarray(self.blowup_step)[k]))


def stage_grid(T: float, n_steps: int) -> np.ndarray:
    return np.linspace(0.0, T, 2 * n_steps + 1)


def modal_forcing(E: EigenSystem, g: Callable, phi) -> Callable:
    """Separable forcing ``f(t, x) = g(t) φ(x)`` as ``t ↦ (M, len(t))`` coefficients."""
    from .nhfourier import forward
    phat = forward(phi, E).fhat

    def fh(t):
        return phat[:, None] * np.asarray(g(np.asarray(t, float)), dtype=complex)[None, :]
    return fh


def assemble_mode_system(E: EigenSystem, xi, p: CoefficientProfile, f: Callable | None = None,
                         n_steps: int | None = None, cfl: float = DEFAULT_CFL,
                         h_cap: float | None = None) -> ModeSystem:
    """Mode system(s) for indices ``xi`` (an int or a sequence) over ``[0, T]``.

    ``f`` maps a time array to modal forcing of shape ``(M, len(t))``.
    """
    idx = np.atleast_1d(np.asarray(xi, dtype=int))
    if np.any(idx < 0) or np.any(idx >= E.n_modes):
        raise IndexError(f"mode index out of range [0, {E.n_modes})")
    w = E.weights[idx]
    lam = E.abs_lambda[idx]
    if n_steps is None:
        tt = np.linspace(0, p.T, 4001)
        sup_root = float(np.sqrt(max(np.max(sample_profile(p, tt)[0]), 0.0)))
        n_steps = choose_steps(p.T, float(w.max()), sup_root, cfl, h_cap)
    ts = stage_grid(p.T, n_steps)
    a, q = sample_profile(p, ts)
    fs = None
    if f is not None:
        fs = np.asarray(f(ts), dtype=complex)[idx]
    if np.ndim(xi) == 0:
        return ModeSystem(int(xi), float(w[0]), float(lam[0]), ts, a, q, None if fs is None else fs[0])
    return ModeSystem(idx, w, lam, ts, a, q, fs)


def _rk4(weight, a, q, f, V0, t_stage):
    """Classical RK4 for ``V1' = i w V2``, ``V2' = i (w a + (q - a)/w) V1 + f``.

    ``weight`` has shape ``(M,)``; ``a``, ``q`` have shape ``(S,)`` or
    ``(M, S)``; ``f`` is ``None`` or ``(M, S)``.  Returns ``V`` of shape
    ``(M, N+1, 2)`` and the first step index of blow-up per mode.
    """
    w = np.asarray(weight, dtype=float)
    m = w.size
    n = (t_stage.size - 1) // 2
    b = w[:, None] * np.broadcast_to(a, (m, t_stage.size)) + (
        np.broadcast_to(np.asarray(q) - np.asarray(a), (m, t_stage.size)) / w[:, None])
    ff = np.zeros((m, t_stage.size), dtype=complex) if f is None else np.broadcast_to(f, (m, t_stage.size))
    V = np.empty((m, n + 1, 2), dtype=complex)
    x1 = np.array(V0[:, 0], dtype=complex)
    x2 = np.array(V0[:, 1], dtype=complex)
    V[:, 0, 0], V[:, 0, 1] = x1, x2
    blow = np.full(m, -1, dtype=int)
    iw = 1j * w
    with np.errstate(all="ignore"):
        for k in range(n):
            h = t_stage[2 * k + 2] - t_stage[2 * k]
            b0, bh, b1 = b[:, 2 * k], b[:, 2 * k + 1], b[:, 2 * k + 2]
            f0, fh, f1 = ff[:, 2 * k], ff[:, 2 * k + 1], ff[:, 2 * k + 2]
            k11 = iw * x2
            k12 = 1j * b0 * x1 + f0
            y1, y2 = x1 + 0.5 * h * k11, x2 + 0.5 * h * k12
            k21 = iw * y2
            k22 = 1j * bh * y1 + fh
            y1, y2 = x1 + 0.5 * h * k21, x2 + 0.5 * h * k22
            k31 = iw * y2
            k32 = 1j * bh * y1 + fh
            y1, y2 = x1 + h * k31, x2 + h * k32
            k41 = iw * y2
            k42 = 1j * b1 * y1 + f1
            x1 = x1 + h / 6 * (k11 + 2 * k21 + 2 * k31 + k41)
            x2 = x2 + h / 6 * (k12 + 2 * k22 + 2 * k32 + k42)
            bad = ~(np.abs(x1) <= BLOWUP) | ~(np.abs(x2) <= BLOWUP)
            new = bad & (blow < 0)
            if np.any(new):
                blow[new] = k + 1
                x1 = np.where(bad, np.nan, x1)
                x2 = np.where(bad, np.nan, x2)
            V[:, k + 1, 0], V[:, k + 1, 1] = x1, x2
    return V, blow


def integrate_mode(sys: ModeSystem, V0) -> ModeTrace:
    """Fourth-order integration of one or several modes from ``V(0) = V0``;
    the recorded energy is the symmetriser energy ``a|V1|² + |V2|²``."""
    single = np.ndim(sys.weight) == 0
    w = np.atleast_1d(np.asarray(sys.weight, dtype=float))
    V0 = np.asarray(V0, dtype=complex).reshape(w.size, 2)
    if not np.all(np.isfinite(V0)):
        raise ValueError("initial state is not finite")
    f = None if sys.f is None else np.atleast_2d(sys.f)
    V, blow = _rk4(w, sys.a, sys.q, f, V0, sys.t_stage)
    a_t = np.asarray(sys.a)[..., ::2]
    E = symmetriser_energy(V, a_t)
    if single:
        return ModeTrace(sys.t, V[0], E[0], "S", a_t, float(w[0]), sys.xi, int(blow[0]))
    return ModeTrace(sys.t, V, E, "S", a_t, w, sys.xi, blow)


integrate_modes = integrate_mode


def initial_state(weight, v0hat, v1hat) -> np.ndarray:
    """``V(0) = (i⟨ξ⟩ v̂₀, v̂₁)``, shape ``(..., 2)``."""
    w = np.asarray(weight, dtype=float)
    return np.stack(np.broadcast_arrays(1j * w * np.asarray(v0hat), np.asarray(v1hat, dtype=complex)), axis=-1)


def closed_form_oracle(abs_lambda: float, a_const: float, q_const: float, v0: complex, v1: complex, t):
    """Exact ``(v̂, ∂_t v̂)`` for ``v̂'' + (|λ| a + q) v̂ = 0``."""
    t = np.asarray(t, dtype=float)
    w2 = abs_lambda * a_const + q_const
    if w2 > 0:
        w = math.sqrt(w2)
        return v0 * np.cos(w * t) + v1 * np.sin(w * t) / w, -v0 * w * np.sin(w * t) + v1 * np.cos(w * t)
    if w2 < 0:
        g = math.sqrt(-w2)
        return v0 * np.cosh(g * t) + v1 * np.sinh(g * t) / g, v0 * g * np.sinh(g * t) + v1 * np.cosh(g * t)
    return v0 + v1 * t, v1 + 0 * t


def symmetriser_energy(V, a) -> np.ndarray:
    return np.asarray(a) * np.abs(V[..., 0]) ** 2 + np.abs(V[..., 1]) ** 2


def quasi_energy(V, a, eps) -> np.ndarray:
    return (np.asarray(a) + eps ** 2) * np.abs(V[..., 0]) ** 2 + np.abs(V[..., 1]) ** 2


def energy_trace(trace: ModeTrace, functional: str = "S", eps=None) -> np.ndarray:
    """``a|V1|² + |V2|²`` for ``"S"``; ``(a + ε²)|V1|² + |V2|²`` for ``"P"``.

    For sweeps ``eps`` may be an array with one value per mode.
    """
    if functional == "S":
        return symmetriser_energy(trace.V, trace.a)
    if functional == "P":
        if eps is None:
            raise ValueError("quasi-symmetriser energy needs ε")
        e = np.asarray(eps, dtype=float)
        if e.ndim:
            e = e[:, None]
        return quasi_energy(trace.V, trace.a, e)
    raise ValueError(f"unknown energy functional {functional!r}; valid: 'S', 'P'")


def quasi_commutator(V, a, eps) -> tuple[np.ndarray, np.ndarray]:
    """``i((P_ε A - A* P_ε) V, V)`` and ``ε (P_ε V, V)`` at every sample.

    With ``P_ε = [[a + ε², 0], [0, 1]]`` the commutator is ``ε² [[0, 1], [-1, 0]]``,
    so the left side is ``2ε² Im(V1 conj(V2))``.
    """
    e = np.asarray(eps, dtype=float)
    if e.ndim:
        e = e[:, None]
    V1, V2 = V[..., 0], V[..., 1]
    lhs = 1j * e ** 2 * (V2 * np.conj(V1) - V1 * np.conj(V2))
    return lhs.real, e * quasi_energy(V, a, e)


@dataclass(frozen=True, eq=False)
class Case2Frame:
    """Change of unknowns ``W = e^{-k t ⟨ξ⟩^{1/s}} (det H) H^{-1} V`` with
    ``H = [[1, 1], [-λ^ε, λ^ε]]``, ``ε = ⟨ξ⟩^{-1}``."""

    eps: float
    t: np.ndarray
    lam: np.ndarray
    k: float
    s: float
    weight: float

    def __post_init__(self):
        if np.any(self.lam <= 0):
            raise ValueError("H is singular: λ^ε must stay positive")

    @property
    def det(self) -> np.ndarray:
        return 2 * self.lam

    @property
    def H(self) -> np.ndarray:
        out = np.empty(self.lam.shape + (2, 2))
        out[..., 0, 0] = out[..., 0, 1] = 1.0
        out[..., 1, 0] = -self.lam
        out[..., 1, 1] = self.lam
        return out

    def norm_H(self) -> np.ndarray:
        # singular values of H are √2 and √2 λ
        return math.sqrt(2) * np.maximum(1.0, self.lam)


@dataclass(frozen=True, eq=False)
class WTrace:
    t: np.ndarray
    W: np.ndarray
    norm: np.ndarray
    monotone: bool
    worst_increase: float


def case2_transform(V, frame: Case2Frame, rtol: float = 1e-7) -> WTrace:
    """``W`` from a trace of ``V`` and the per-step monotonicity check of ``|W|``."""
    V = np.asarray(V.V if isinstance(V, ModeTrace) else V)
    lam = frame.lam
    decay = np.exp(-frame.k * frame.t * frame.weight ** (1.0 / frame.s))
    W = np.empty_like(V, dtype=complex)
    W[..., 0] = decay * (lam * V[..., 0] - V[..., 1])
    W[..., 1] = decay * (lam * V[..., 0] + V[..., 1])
    norm = np.sqrt(np.sum(np.abs(W) ** 2, axis=-1))
    prev = norm[:-1]
    rel = np.where(prev > 0, (norm[1:] - prev) / np.where(prev > 0, prev, 1.0), np.where(norm[1:] > 0, np.inf, 0.0))
    worst = float(np.max(rel)) if rel.size else 0.0
    return WTrace(frame.t, W, norm, worst <= rtol, worst)


def sweep_norms(V, weights, s: float) -> np.ndarray:
    """``Σ_ξ ⟨ξ⟩^{2s} |V(t, ξ)|²`` for a sweep ``V`` of shape ``(M, N+1, 2)``."""
    w = np.asarray(weights, dtype=float)
    return np.sum(w[:, None] ** (2 * s) * np.sum(np.abs(V) ** 2, axis=-1), axis=0)
