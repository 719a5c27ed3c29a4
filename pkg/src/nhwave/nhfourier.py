"""Expansions against a biorthogonal eigensystem: the transform pair, the
Parseval pairing and the Sobolev / Gevrey norms it induces.

For ``f = Σ f̂(ξ) u_ξ`` the two coefficient sequences are

    f̂(ξ)   = <f, v_ξ>      (expansion coefficients)
    f̂_*(ξ) = <f, u_ξ>      (coefficients against the adjoint basis)

and ``‖f‖² = Σ f̂(ξ) conj(f̂_*(ξ))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .operator import EigenSystem, Grid1D

LOG_FLOAT_MAX = math.log(np.finfo(float).max)
GEVREY_FLOOR = 0.05


class TransformError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        if np.shape(self.values) != (self.grid.n_interior,):
            raise TransformError(
                f"grid function has {np.size(self.values)} values, grid has {self.grid.n_interior} interior nodes")

    def norm(self) -> float:
        return self.grid.norm(self.values)


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    fhat: np.ndarray
    fhat_star: np.ndarray
    eigensystem: EigenSystem

    def __post_init__(self):
        m = self.eigensystem.n_modes
        if self.fhat.shape != (m,) or self.fhat_star.shape != (m,):
            raise TransformError(f"coefficient sequences must have length {m}")


@dataclass(frozen=True)
class NormReport:
    kind: str
    value: float
    truncation: int
    tail: float
    s: float = float("nan")
    A: float = float("nan")
    imag_residue: float = 0.0
    overflow_mode: int | None = None

    def record(self) -> dict:
        return {"kind": self.kind, "s": self.s, "A": self.A, "value": self.value,
                "tail": self.tail, "imag_residue": self.imag_residue}


def _values(f, E: EigenSystem) -> np.ndarray:
    if isinstance(f, GridFunction):
        if f.grid != E.grid:
            raise TransformError(f"grid mismatch: {f.grid} vs {E.grid}")
        return np.asarray(f.values)
    f = np.asarray(f)
    if f.shape != (E.grid.n_interior,):
        raise TransformError(f"expected {E.grid.n_interior} interior samples, got shape {f.shape}")
    return f


def forward(f, E: EigenSystem) -> SpectralCoeffs:
    vals = _values(f, E)
    h = E.grid.spacing
    return SpectralCoeffs(h * (E.left.conj().T @ vals), h * (E.right.conj().T @ vals), E)


def coeffs_from_fhat(fhat, E: EigenSystem) -> SpectralCoeffs:
    """Coefficients of ``Σ fhat[ξ] u_ξ``; ``f̂_*`` comes from the Gram matrix."""
    fhat = np.asarray(fhat, dtype=complex)
    if fhat.shape != (E.n_modes,):
        raise TransformError(f"expected {E.n_modes} coefficients, got shape {fhat.shape}")
    return SpectralCoeffs(fhat, E.gram @ fhat, E)


def inverse(c: SpectralCoeffs, E: EigenSystem | None = None) -> GridFunction:
    E = c.eigensystem if E is None else E
    fhat = np.asarray(c.fhat)
    if fhat.shape != (E.n_modes,):
        raise TransformError(f"expected {E.n_modes} coefficients, got shape {fhat.shape}")
    return GridFunction(E.right @ fhat, E.grid)


def parseval_pairing(c: SpectralCoeffs, d: SpectralCoeffs) -> complex:
    """``Σ ĉ(ξ) conj(d̂_*(ξ))``, which equals ``<f_c, f_d>`` on the resolved span."""
    if c.eigensystem is not d.eigensystem:
        raise TransformError("coefficients belong to different eigensystems")
    return complex(np.sum(c.fhat * np.conj(d.fhat_star)))


def _weighted_pairing(c: SpectralCoeffs, s: float) -> np.ndarray:
    w = c.eigensystem.weights
    return w ** (2 * s) * c.fhat * np.conj(c.fhat_star)


def sobolev_norm(c: SpectralCoeffs, s: float, imag_tol: float | None = 1e-6) -> NormReport:
    """``(Re Σ ⟨ξ⟩^{2s} f̂ conj(f̂_*))^{1/2}``.

    The imaginary part of the sum is returned as ``imag_residue`` (relative
    to ``|sum|``).  For non-normal systems it need not vanish; pass
    ``imag_tol=None`` to report it without raising.
    """
    if not np.isfinite(s):
        raise ValueError(f"s must be finite, got {s}")
    terms = _weighted_pairing(c, s)
    total = complex(np.sum(terms))
    scale = abs(total)
    resid = abs(total.imag) / scale if scale > 0 else 0.0
    if total.real < -1e-12 * max(scale, np.sum(np.abs(terms))):
        raise TransformError(f"negative Sobolev pairing {total.real:.6g}: biorthogonal pairing is broken")
    if imag_tol is not None and resid > imag_tol:
        raise TransformError(f"Sobolev pairing has relative imaginary residue {resid:.3g} > {imag_tol:.3g}")
    return NormReport(f"sobolev({s:g})", math.sqrt(max(total.real, 0.0)), terms.size,
                      float(abs(terms[-1])), s=float(s), imag_residue=resid)


def l2_norm(c: SpectralCoeffs) -> NormReport:
    r = sobolev_norm(c, 0.0)
    return NormReport("L2", r.value, r.truncation, r.tail, s=0.0, imag_residue=r.imag_residue)


def gevrey_norm(c: SpectralCoeffs, s: float, A: float) -> NormReport:
    """``(Σ e^{2A⟨ξ⟩^{1/s}} |f̂(ξ)|²)^{1/2}``, summed in log space.

    If the sum overflows the result is ``inf`` and ``overflow_mode`` names the
    dominant term.
    """
    if s < 1:
        raise ValueError(f"Gevrey index must be >= 1, got {s}")
    if not A > 0:
        raise ValueError(f"Gevrey radius must be positive, got {A}")
    w = c.eigensystem.weights
    mag = np.abs(c.fhat)
    with np.errstate(divide="ignore"):
        logs = 2 * A * w ** (1.0 / s) + 2 * np.log(mag)
    tail = float(np.exp(logs[-1])) if logs[-1] < LOG_FLOAT_MAX else math.inf
    if np.all(np.isneginf(logs)):
        return NormReport(f"gevrey({s:g},{A:g})", 0.0, w.size, 0.0, s=float(s), A=float(A))
    half = 0.5 * float(logsumexp(logs))
    if half >= LOG_FLOAT_MAX:
        return NormReport(f"gevrey({s:g},{A:g})", math.inf, w.size, tail, s=float(s), A=float(A),
                          overflow_mode=int(np.argmax(logs)))
    return NormReport(f"gevrey({s:g},{A:g})", math.exp(half), w.size, tail, s=float(s), A=float(A))


def fit_gevrey_radius(fhat, weights, s: float) -> float:
    """Least-squares slope of ``-log|f̂|`` against ``⟨ξ⟩^{1/s}`` over the upper half
    of the usable (nonzero) modes, with at least five points."""
    mag = np.abs(np.asarray(fhat))
    w = np.asarray(weights, dtype=float)
    usable = np.flatnonzero((mag > 0) & np.isfinite(mag))
    if usable.size < 5:
        raise ValueError(f"need at least 5 nonzero coefficients, got {usable.size}")
    sel = usable[usable.size // 2:]
    if sel.size < 5:
        sel = usable[-5:]
    x = w[sel] ** (1.0 / s)
    y = -np.log(mag[sel])
    if np.ptp(x) == 0:
        raise ValueError("weights are degenerate over the fitted modes")
    return float(np.polyfit(x, y, 1)[0])


def gevrey_radius_fit(c: SpectralCoeffs, s: float) -> float:
    return fit_gevrey_radius(c.fhat, c.eigensystem.weights, s)


def gevrey_certified(A: float, floor: float = GEVREY_FLOOR) -> bool:
    return A > floor
