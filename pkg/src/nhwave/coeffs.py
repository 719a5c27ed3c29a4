"""Time coefficients ``a(t)``, ``q(t)`` and their mollifications.

A coefficient is a finite sum of atoms: regular functions (expressions or
callables) and the distributions ``δ(t - t₀)``, ``δ'(t - t₀)`` and
``H(t - t₀)``.  Distributional atoms are only ever convolved in closed form.

Convolution convention throughout:

    (g ∗ ψ_ω)(t) = ∫₀¹ g(t - ωx) ψ(x) dx,

with ``g`` extended outside ``[0, T]`` by its edge values, so constants are
fixed points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .expr import Expression

TAGS = ("Linf1", "HolderNondeg", "Smooth", "HolderDeg", "Distributional")
ATOM_KINDS = ("regular", "dirac", "dirac_prime", "heaviside")
ATOM_ORDER = {"regular": 0, "heaviside": 0, "dirac": 1, "dirac_prime": 2}


class ProfileError(ValueError):
    pass


class MustMollifyError(ProfileError):
    """Pointwise sampling was requested for a distributional coefficient."""


@dataclass(frozen=True)
class DistributionalAtom:
    kind: str
    location: float = 0.0
    amplitude: float = 1.0
    func: Callable | None = None

    def __post_init__(self):
        if self.kind not in ATOM_KINDS:
            raise ProfileError(f"unknown atom kind {self.kind!r}; valid: {list(ATOM_KINDS)}")
        if self.kind == "regular" and self.func is None:
            raise ProfileError("regular atom needs a function")

    @property
    def order(self) -> int:
        return ATOM_ORDER[self.kind]


def regular(f, amplitude: float = 1.0) -> DistributionalAtom:
    if isinstance(f, str):
        f = Expression(f, var="t")
    elif isinstance(f, (int, float)):
        f = Expression(repr(float(f)), var="t")
    return DistributionalAtom("regular", 0.0, amplitude, f)


def dirac(t0: float, amplitude: float = 1.0) -> DistributionalAtom:
    return DistributionalAtom("dirac", float(t0), amplitude)


def dirac_prime(t0: float, amplitude: float = 1.0) -> DistributionalAtom:
    return DistributionalAtom("dirac_prime", float(t0), amplitude)


def heaviside(t0: float, amplitude: float = 1.0) -> DistributionalAtom:
    return DistributionalAtom("heaviside", float(t0), amplitude)


def _as_atoms(source) -> tuple[DistributionalAtom, ...]:
    if isinstance(source, DistributionalAtom):
        return (source,)
    if isinstance(source, (str, int, float)) or callable(source):
        return (regular(source),)
    return tuple(a if isinstance(a, DistributionalAtom) else regular(a) for a in source)


@dataclass(frozen=True)
class Coefficient:
    atoms: tuple[DistributionalAtom, ...]

    @property
    def is_regular(self) -> bool:
        return all(a.kind == "regular" for a in self.atoms)

    @property
    def order(self) -> int:
        return max((a.order for a in self.atoms), default=0)

    def __call__(self, t) -> np.ndarray:
        if not self.is_regular:
            kinds = sorted({a.kind for a in self.atoms if a.kind != "regular"})
            raise MustMollifyError(f"coefficient contains {kinds} atoms; mollify it first")
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a in self.atoms:
            out = out + a.amplitude * np.asarray(a.func(t), dtype=float)
        return out


@dataclass(frozen=True)
class CoefficientProfile:
    """Coefficients ``a``, ``q`` on ``[0, T]`` with a declared regularity class.

    ``alpha`` is the Hölder order (HolderNondeg, HolderDeg), ``l`` the
    smoothness order (Smooth), ``a0`` the declared lower bound of ``a``.
    """

    a: Coefficient
    q: Coefficient
    tag: str
    T: float = 1.0
    a0: float = 0.0
    alpha: float | None = None
    l: int | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ProfileError(f"unknown regularity tag {self.tag!r}; valid: {list(TAGS)}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ProfileError(f"time horizon must be positive, got {self.T}")
        for name, c in (("a", self.a), ("q", self.q)):
            for atom in c.atoms:
                if atom.kind != "regular":
                    if self.tag != "Distributional":
                        raise ProfileError(f"{name} has a {atom.kind} atom but tag is {self.tag}")
                    if not 0 <= atom.location <= self.T:
                        raise ProfileError(f"atom location {atom.location} outside [0, {self.T}]")

    @property
    def is_regular(self) -> bool:
        return self.a.is_regular and self.q.is_regular

    def check(self, n: int = 4001) -> None:
        """Raise if sampled values violate the tag's invariants."""
        if not self.is_regular:
            return
        t = np.linspace(0, self.T, n)
        a = self.a(t)
        if not np.all(np.isfinite(a)) or not np.all(np.isfinite(self.q(t))):
            raise ProfileError("coefficients are not finite on [0, T]")
        if self.tag in ("Linf1", "HolderNondeg"):
            if self.a0 <= 0:
                raise ProfileError(f"{self.tag} profile needs a0 > 0, got {self.a0}")
            k = int(np.argmin(a))
            if a[k] < self.a0 * (1 - 1e-12):
                raise ProfileError(f"a({t[k]:.6g}) = {a[k]:.6g} is below the declared a0 = {self.a0:.6g}")
        elif self.tag in ("Smooth", "HolderDeg"):
            k = int(np.argmin(a))
            if a[k] < -1e-14:
                raise ProfileError(f"a({t[k]:.6g}) = {a[k]:.6g} is negative")


def profile(a, q=0.0, tag: str = "Linf1", T: float = 1.0, a0: float = 0.0,
            alpha: float | None = None, l: int | None = None) -> CoefficientProfile:
    """Build a profile from expressions in ``t``, callables, numbers or atom lists."""
    return CoefficientProfile(Coefficient(_as_atoms(a)), Coefficient(_as_atoms(q)), tag, float(T),
                              float(a0), alpha, l)


def time_grid(T: float, n: int) -> np.ndarray:
    return np.linspace(0.0, T, n)


def sample_profile(p: CoefficientProfile, t_grid) -> tuple[np.ndarray, np.ndarray]:
    if p.tag == "Distributional" and not p.is_regular:
        raise MustMollifyError("distributional profile must be mollified before sampling")
    t = np.asarray(t_grid, dtype=float)
    return p.a(t), p.q(t)


def derivative_sup(f: Callable, T: float, order: int = 1, n: int = 20001) -> float:
    """``sup |f^{(order)}|`` on ``[0, T]`` by repeated second-order differences."""
    t = np.linspace(0, T, n)
    y = f(t)
    for _ in range(order):
        y = np.gradient(y, t, edge_order=2)
    return float(np.max(np.abs(y)))


def smooth_norm(f: Callable, T: float, l: int, n: int = 20001) -> float:
    """``‖f‖_{C^l} = max_{k ≤ l} sup|f^{(k)}|`` on ``[0, T]``."""
    t = np.linspace(0, T, n)
    y = f(t)
    best = float(np.max(np.abs(y)))
    for _ in range(l):
        y = np.gradient(y, t, edge_order=2)
        best = max(best, float(np.max(np.abs(y))))
    return best


def holder_constant(p, alpha: float, t_grid) -> float:
    """Lower estimate of ``sup |f(t) - f(s)| / |t - s|^α`` from dyadic index separations.

    ``p`` may be a profile (its ``a`` is used), a callable or an array of
    samples on ``t_grid``.
    """
    if not 0 < alpha < 2:
        raise ValueError(f"Hölder order must be in (0, 2), got {alpha}")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing with at least 2 points")
    if isinstance(p, CoefficientProfile):
        y = p.a(t)
    elif callable(p):
        y = np.asarray(p(t), dtype=float)
    else:
        y = np.asarray(p, dtype=float)
    best = 0.0
    d = 1
    while d < t.size:
        num = np.abs(y[d:] - y[:-d])
        den = (t[d:] - t[:-d]) ** alpha
        best = max(best, float(np.max(num / den)))
        d *= 2
    return best


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1), 0.5 * w)
    return _GL_CACHE[n]


@dataclass(frozen=True)
class Mollifier:
    """Bump ``ψ(x) = κ exp(-β / (x(1-x)))`` on ``(0, 1)`` with a scale rule ``ε ↦ ω(ε)``.

    ``rule="identity"`` gives ``ω(ε) = ε``; ``rule="log"`` gives
    ``ω(ε) = ((L/C) log(1/ε))^{-1/L}``.
    """

    beta: float = 1.0
    rule: str = "identity"
    L: float | None = None
    C: float | None = None
    n_nodes: int = 128

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("bump parameter beta must be positive")
        if self.rule not in ("identity", "log"):
            raise ValueError(f"unknown scale rule {self.rule!r}; valid: ['identity', 'log']")
        if self.rule == "log" and not (self.L and self.C and self.L > 0 and self.C > 0):
            raise ValueError("log rule needs positive L and C")

    @cached_property
    def kappa(self) -> float:
        mass, _ = integrate.quad(lambda x: math.exp(-self.beta / (x * (1 - x))), 0, 1,
                                 epsabs=0, epsrel=1e-13, limit=200)
        return 1.0 / mass

    def psi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x > 0) & (x < 1)
        g = np.where(inside, x * (1 - x), 1.0)
        return np.where(inside, self.kappa * np.exp(-self.beta / g), 0.0)

    def dpsi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x > 0) & (x < 1)
        g = np.where(inside, x * (1 - x), 1.0)
        return np.where(inside, self.psi(x) * self.beta * (1 - 2 * x) / g ** 2, 0.0)

    def d2psi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x > 0) & (x < 1)
        g = np.where(inside, x * (1 - x), 1.0)
        gp = 1 - 2 * x
        b = self.beta
        return np.where(inside, self.psi(x) * b * (b * gp ** 2 - 2 * g ** 2 - 2 * g * gp ** 2) / g ** 4, 0.0)

    @property
    def sup(self) -> float:
        """``‖ψ‖_∞ = κ e^{-4β}``, attained at ``x = 1/2``."""
        return self.kappa * math.exp(-4 * self.beta)

    @property
    def dpsi_l1(self) -> float:
        """``∫|ψ'| = 2‖ψ‖_∞`` (ψ rises then falls once)."""
        return 2 * self.sup

    def cdf(self, y) -> np.ndarray:
        """``Ψ(y) = ∫₀^y ψ``."""
        y = np.asarray(y, dtype=float)
        yc = np.clip(y, 0.0, 1.0)
        x, w = _gauss_legendre(self.n_nodes)
        vals = np.clip(yc * (self.psi(yc[..., None] * x) @ w), 0.0, 1.0)
        return np.where(y >= 1, 1.0, vals)

    @cached_property
    def _weights(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x, w = _gauss_legendre(self.n_nodes)
        wp = w * self.psi(x)
        return x, wp / wp.sum(), w * self.dpsi(x)

    def omega(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        if self.rule == "identity":
            return eps
        return ((self.L / self.C) * np.log(1.0 / eps)) ** (-1.0 / self.L)

    def convolve(self, g: Callable, t, omega: float, T: float, chunk: int = 4096):
        """``(g ∗ ψ_ω)(t)`` and its time derivative, with ``g`` extended by edge values."""
        t = np.asarray(t, dtype=float)
        x, wv, wd = self._weights
        val = np.empty(t.shape, dtype=float)
        der = np.empty(t.shape, dtype=float)
        flat_t, flat_v, flat_d = t.ravel(), val.ravel(), der.ravel()
        for i in range(0, flat_t.size, chunk):
            arg = np.clip(flat_t[i:i + chunk, None] - omega * x[None, :], 0.0, T)
            gv = np.asarray(g(arg), dtype=float)
            flat_v[i:i + chunk] = gv @ wv
            flat_d[i:i + chunk] = (gv @ wd) / omega
        return flat_v.reshape(t.shape), flat_d.reshape(t.shape)


def mollify_coefficient(c: Coefficient, m: Mollifier, omega: float, t, T: float):
    """Values and time derivative of ``c ∗ ψ_ω``; distributional atoms in closed form."""
    t = np.asarray(t, dtype=float)
    val = np.zeros_like(t)
    der = np.zeros_like(t)
    reg = [a for a in c.atoms if a.kind == "regular"]
    if reg:
        v, d = m.convolve(Coefficient(tuple(reg)), t, omega, T)
        val += v
        der += d
    for a in c.atoms:
        y = (t - a.location) / omega
        if a.kind == "dirac":
            val += a.amplitude * m.psi(y) / omega
            der += a.amplitude * m.dpsi(y) / omega ** 2
        elif a.kind == "dirac_prime":
            val += a.amplitude * m.dpsi(y) / omega ** 2
            der += a.amplitude * m.d2psi(y) / omega ** 3
        elif a.kind == "heaviside":
            val += a.amplitude * m.cdf(y)
            der += a.amplitude * m.psi(y) / omega
    return val, der


@dataclass(frozen=True, eq=False)
class SmoothedRoot:
    """``λ^ε = √a ∗ ψ_ε`` tabulated on ``t`` together with ``∂_t λ^ε``."""

    eps: float
    t: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    source: CoefficientProfile
    lift: float = 0.0


def root_function(p: CoefficientProfile) -> Callable:
    def r(t):
        a = p.a(t)
        if np.any(a < -1e-14):
            raise ProfileError("a takes negative values; its square root is undefined")
        return np.sqrt(np.maximum(a, 0.0))
    return r


def smooth_root(p: CoefficientProfile, eps: float, t_grid=None, mollifier: Mollifier | None = None,
                lift: float = 0.0) -> SmoothedRoot:
    """Mollified square root of ``a`` at scale ``ε``, plus an optional constant ``lift``.

    The default grid has ``max(2001, 20T/ε)`` points so the ``ε``-scale
    structure is resolved.
    """
    if not 0 < eps <= 1:
        raise ValueError(f"ε must lie in (0, 1], got {eps}")
    m = mollifier or Mollifier()
    if t_grid is None:
        t_grid = np.linspace(0, p.T, max(2001, int(math.ceil(20 * p.T / eps)) + 1))
    t = np.asarray(t_grid, dtype=float)
    r = root_function(p)
    r(np.linspace(0, p.T, 4001))
    val, der = m.convolve(r, t, eps, p.T)
    return SmoothedRoot(float(eps), t, val + lift, der, p, lift)


@dataclass(frozen=True, eq=False)
class CoefficientNet:
    """``a_ε``, ``q_ε`` (and time derivatives) sampled on ``t`` for every ε."""

    eps: np.ndarray
    omega: np.ndarray
    t: np.ndarray
    a: np.ndarray
    q: np.ndarray
    da: np.ndarray
    dq: np.ndarray
    profile: CoefficientProfile
    mollifier: Mollifier = field(default_factory=Mollifier)


def mollify_net(p: CoefficientProfile, m: Mollifier, eps_list: Sequence[float], t_grid=None) -> CoefficientNet:
    eps = np.asarray(list(eps_list), dtype=float)
    if eps.size == 0:
        raise ValueError("empty ε list")
    if np.any(eps <= 0) or np.any(eps > 1):
        raise ValueError("ε values must lie in (0, 1]")
    t = np.linspace(0, p.T, 4001) if t_grid is None else np.asarray(t_grid, dtype=float)
    omega = np.atleast_1d(m.omega(eps))
    rows = [(mollify_coefficient(p.a, m, w, t, p.T), mollify_coefficient(p.q, m, w, t, p.T)) for w in omega]
    a = np.array([r[0][0] for r in rows])
    da = np.array([r[0][1] for r in rows])
    q = np.array([r[1][0] for r in rows])
    dq = np.array([r[1][1] for r in rows])
    return CoefficientNet(eps, omega, t, a, q, da, dq, p, m)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def root_estimate_slopes(p: CoefficientProfile, eps_list: Sequence[float],
                         mollifier: Mollifier | None = None) -> dict:
    """Log-log slopes of ``sup|λ^ε - √a|`` and ``sup|∂_t λ^ε|`` against ε.

    For a Hölder-α root these should be close to ``α`` and ``α - 1``.
    """
    eps = np.asarray(list(eps_list), dtype=float)
    if eps.size < 2:
        raise ValueError("need at least two ε values")
    r = root_function(p)
    err, der = [], []
    for e in eps:
        sr = smooth_root(p, float(e), mollifier=mollifier)
        err.append(float(np.max(np.abs(sr.values - r(sr.t)))))
        der.append(float(np.max(np.abs(sr.derivative))))
    return {"eps": eps, "error": np.array(err), "derivative": np.array(der),
            "error_slope": loglog_slope(eps, err), "derivative_slope": loglog_slope(eps, der)}
