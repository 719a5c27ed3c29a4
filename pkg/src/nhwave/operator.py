"""Finite-difference Schrödinger operator ``-d²/dx² + V`` on ``[-R, R]`` and
its biorthogonal eigensystem.

The truncation boundary carries zero Dirichlet data, so matrices act on the
interior nodes only.  Inner products are trapezoid sums on the full grid; with
zero boundary values they reduce to ``h * sum(f * conj(g))`` over the interior,
which makes the matrix adjoint the plain conjugate transpose.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .expr import Expression

log = logging.getLogger(__name__)

MIN_POINTS = 3
LAMBDA_FLOOR = 1e-10
ZERO_SHIFT = 1.0
MATCH_RTOL = 1e-6


class EigenError(RuntimeError):
    """Raised when the eigensystem cannot be built to tolerance."""


@dataclass(frozen=True)
class Grid1D:
    radius: float
    n_points: int

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.n_points)

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def n_interior(self) -> int:
        return self.n_points - 2

    def inner(self, f, g) -> complex:
        """Trapezoid ``<f, g> = ∫ f conj(g)`` for interior-node samples."""
        return complex(self.spacing * np.sum(np.asarray(f) * np.conj(g)))

    def norm(self, f) -> float:
        return float(np.sqrt(self.spacing * np.sum(np.abs(f) ** 2)))


def build_grid(radius: float, n_points: int) -> Grid1D:
    radius = float(radius)
    if not np.isfinite(radius) or radius <= 0:
        raise ValueError(f"radius must be finite and positive, got {radius}")
    if int(n_points) != n_points or n_points < MIN_POINTS:
        raise ValueError(f"n_points must be an integer >= {MIN_POINTS}, got {n_points}")
    return Grid1D(radius, int(n_points))


@dataclass(frozen=True)
class ComplexPotential:
    """``V(x) = re_part(x) + i im_part(x)``.

    ``core_radius`` bounds the region inside which ``Re V`` need not grow
    with ``|x|``.
    """

    re_part: Callable[[np.ndarray], np.ndarray]
    im_part: Callable[[np.ndarray], np.ndarray]
    preset: str = "custom"
    core_radius: float = 0.0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.re_part(x), dtype=float) + 1j * np.asarray(self.im_part(x), dtype=float)

    @property
    def is_real(self) -> bool:
        return self.preset in _REAL_PRESETS or (
            isinstance(self.im_part, Expression) and _is_zero_expr(self.im_part))

    def check(self, grid: Grid1D) -> list[str]:
        """Invariant violations of the potential on ``grid`` (empty when fine)."""
        x = grid.nodes
        re = np.asarray(self.re_part(x), dtype=float)
        problems = []
        bad = np.flatnonzero(re < 0)
        if bad.size:
            problems.append(f"Re V < 0 at {bad.size} node(s), first x={x[bad[0]]:.6g}")
        for side in (x > self.core_radius, x < -self.core_radius):
            vals = re[side]
            if side[0]:
                vals = vals[::-1]
            # ordered by increasing |x|
            drops = np.flatnonzero(np.diff(vals) < -1e-12 * (1 + np.abs(vals[:-1])))
            if drops.size:
                problems.append("Re V decreases in |x| outside the core radius")
                break
        return problems


def _is_zero_expr(e: Expression) -> bool:
    try:
        return float(e.text) == 0.0
    except ValueError:
        return False


_REAL_PRESETS = {"harmonic", "free"}


def harmonic() -> ComplexPotential:
    return ComplexPotential(Expression("x**2"), Expression("0"), "harmonic")


def harmonic_complex() -> ComplexPotential:
    return ComplexPotential(Expression("x**2"), Expression("x*exp(-x**2)"), "harmonic_complex")


def free() -> ComplexPotential:
    return ComplexPotential(Expression("0"), Expression("0"), "free")


PRESETS = {"harmonic": harmonic, "harmonic_complex": harmonic_complex, "free": free}


def potential_from_spec(preset: str | None = None, re: str | None = None,
                        im: str | None = None, core_radius: float = 0.0) -> ComplexPotential:
    if preset is not None and preset != "custom":
        if preset not in PRESETS:
            raise ValueError(f"unknown potential preset {preset!r}; valid: {sorted(PRESETS)}")
        return PRESETS[preset]()
    if re is None:
        raise ValueError("custom potential needs a 're' expression")
    return ComplexPotential(Expression(re), Expression(im or "0"), "custom", core_radius)


def laplacian_stencil(order: int) -> np.ndarray:
    """Central second-derivative weights ``c_{-m..m}`` of accuracy ``order``."""
    if order < 2 or order % 2:
        raise ValueError(f"stencil order must be an even integer >= 2, got {order}")
    m = order // 2
    c = np.zeros(2 * m + 1)
    for k in range(1, m + 1):
        ck = 2.0 * (-1) ** (k + 1) * factorial(m) ** 2 / (k * k * factorial(m - k) * factorial(m + k))
        c[m + k] = c[m - k] = ck
    c[m] = -2.0 * c[m + 1:].sum()
    return c


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    matrix: np.ndarray
    grid: Grid1D
    potential: ComplexPotential
    order: int = 2

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def potential_values(self) -> np.ndarray:
        return np.diag(self.matrix) - np.diag(_negative_laplacian(self.grid, self.order))


def _negative_laplacian(grid: Grid1D, order: int) -> np.ndarray:
    c = laplacian_stencil(order)
    m = order // 2
    n = grid.n_interior
    lap = np.zeros((n, n))
    for k in range(-m, m + 1):
        if abs(k) < n:
            lap += np.diag(np.full(n - abs(k), c[m + k]), k)
    return -lap / grid.spacing ** 2


def assemble_operator(grid: Grid1D, potential: ComplexPotential, order: int = 8) -> OperatorMatrix:
    """Dense matrix of ``-Δ + V`` on the interior nodes.

    ``order=2`` is the classical tridiagonal ``(-1, 2, -1)/h²`` stencil.
    Higher even orders widen the stencil; nodes beyond the boundary are
    treated as zero (Dirichlet truncation).
    """
    values = potential(grid.interior)
    if not np.all(np.isfinite(values)):
        bad = np.flatnonzero(~np.isfinite(values))[0]
        raise ValueError(f"potential is not finite at x={grid.interior[bad]:.6g}")
    dtype = float if np.all(values.imag == 0) else complex
    mat = _negative_laplacian(grid, order).astype(dtype)
    mat[np.diag_indices_from(mat)] += values if dtype is complex else values.real
    mat.setflags(write=False)
    return OperatorMatrix(mat, grid, potential, order)


def _mode_order(lam: np.ndarray) -> np.ndarray:
    # |λ| first, ties broken by Re then Im; rounding keeps ties deterministic
    mag = np.round(np.abs(lam), 12)
    return np.lexsort((np.round(lam.imag, 12), np.round(lam.real, 12), mag))


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ordered eigenpairs ``(λ_ξ, u_ξ, v_ξ)`` with ``<u_i, v_j> = δ_ij``.

    ``right[:, ξ]`` is ``u_ξ`` and ``left[:, ξ]`` is ``v_ξ`` (an eigenvector
    of the adjoint for ``conj(λ_ξ)``), both sampled on the interior nodes.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    grid: Grid1D
    shift: float = 0.0
    biorth_residual: float = 0.0
    eigen_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tol_biorth: float = 1e-8
    tol_resid: float = 1e-8

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def abs_lambda(self) -> np.ndarray:
        """``|λ_ξ| + c``, the spectrum of the operator driving the wave equation."""
        return np.abs(self.eigenvalues) + self.shift

    @property
    def weights(self) -> np.ndarray:
        """``⟨ξ⟩ = (1 + |λ_ξ| + c)^{1/2}``."""
        return np.sqrt(1.0 + self.abs_lambda)

    @property
    def gram(self) -> np.ndarray:
        """``G[ξ, k] = <u_k, u_ξ>``; maps ``f̂`` to ``f̂_*`` on the resolved span."""
        return self.grid.spacing * (self.right.conj().T @ self.right)

    def biorthogonality(self) -> np.ndarray:
        """Matrix ``B[i, j] = <u_i, v_j>``."""
        return self.grid.spacing * (self.left.conj().T @ self.right).T


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    mag = np.abs(vec)
    k = int(np.flatnonzero(mag > 1e-3 * mag.max())[0])
    return vec * (np.conj(vec[k]) / mag[k])


def compute_eigensystem(op: OperatorMatrix, m_modes: int, tol_biorth: float | None = None,
                        tol_resid: float = 1e-8) -> EigenSystem:
    """The ``m_modes`` smallest-``|λ|`` eigenpairs of ``op`` and its adjoint.

    Right vectors get unit L² norm; each left vector is scaled so that
    ``<u_ξ, v_ξ> = 1``.  If some ``|λ_ξ|`` falls below ``LAMBDA_FLOOR`` the
    weights use a shift ``c = 1``.
    """
    H = np.asarray(op.matrix)
    n = H.shape[0]
    if not 1 <= m_modes <= n:
        raise ValueError(f"m_modes must be in [1, {n}], got {m_modes}")
    if not np.all(np.isfinite(H)):
        raise EigenError("operator matrix has non-finite entries")
    if tol_biorth is None:
        tol_biorth = 1e-8 if np.isrealobj(H) else 1e-6
    grid = op.grid

    try:
        lam, U = scipy.linalg.eig(H)
        lam_adj, Y = scipy.linalg.eig(H.conj().T)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise EigenError(f"eigendecomposition failed: {exc}") from exc

    sel = _mode_order(lam)[:m_modes]
    lam = lam[sel]
    U = U[:, sel]
    # pair each λ with the adjoint eigenvalue closest to conj(λ)
    target = np.conj(lam_adj)
    used = np.zeros(target.size, dtype=bool)
    idx = np.empty(m_modes, dtype=int)
    for i, l in enumerate(lam):
        dist = np.abs(target - l)
        dist[used] = np.inf
        j = int(np.argmin(dist))
        if dist[j] > MATCH_RTOL * (1 + abs(l)):
            raise EigenError(f"no adjoint eigenvalue matches λ={l:.10g} (closest {dist[j]:.3g})")
        used[j] = True
        idx[i] = j
    V = Y[:, idx]

    U = np.column_stack([_fix_phase(U[:, k]) for k in range(m_modes)])
    U = U / np.sqrt(grid.spacing * np.sum(np.abs(U) ** 2, axis=0))
    pair = grid.spacing * np.sum(U * np.conj(V), axis=0)  # <u_ξ, v_ξ>
    V = V / np.conj(pair)
    if np.isrealobj(H):
        # real symmetric matrices: keep everything real
        lam = lam.real + 0j
        U = U.real.astype(complex) if np.allclose(U.imag, 0, atol=1e-12) else U
        V = V.real.astype(complex) if np.allclose(V.imag, 0, atol=1e-12) else V

    B = grid.spacing * (V.conj().T @ U).T
    biorth = float(np.max(np.abs(B - np.eye(m_modes))))
    resid = np.linalg.norm(H @ U - U * lam, axis=0) / (
        np.linalg.norm(U, axis=0) * np.maximum(1.0, np.abs(lam)))
    if biorth > tol_biorth:
        raise EigenError(f"biorthogonality residual {biorth:.3g} exceeds {tol_biorth:.3g}")
    if np.any(resid > tol_resid):
        k = int(np.argmax(resid))
        raise EigenError(f"eigen-residual {resid[k]:.3g} of mode {k} exceeds {tol_resid:.3g}")

    shift = ZERO_SHIFT if np.min(np.abs(lam)) < LAMBDA_FLOOR else 0.0
    if shift:
        log.info("zero eigenvalue detected; weights use shift c=%g", shift)
    for arr in (lam, U, V, resid):
        arr.setflags(write=False)
    return EigenSystem(lam, U, V, grid, shift, biorth, resid, tol_biorth, tol_resid)


@dataclass(frozen=True, eq=False)
class SpectralReport:
    n_points: tuple[int, ...]
    eigenvalues: np.ndarray  # (levels, modes)
    drift: np.ndarray
    gaps: np.ndarray
    flagged: np.ndarray

    @property
    def stable(self) -> bool:
        return not bool(np.any(self.flagged))


def verify_discreteness(operators: Sequence[OperatorMatrix], m_modes: int) -> SpectralReport:
    """Eigenvalue drift between the two finest refinements against spectral gaps.

    A mode is flagged when its drift exceeds a tenth of its distance to the
    nearest other eigenvalue.  This is a report on the truncated problem and
    says nothing rigorous about the continuum operator.
    """
    if len(operators) < 2:
        raise ValueError("need at least 2 refinement levels")
    ops = sorted(operators, key=lambda o: o.grid.n_points)
    levels = []
    for op in ops:
        lam = scipy.linalg.eigvals(np.asarray(op.matrix))
        lam = lam[_mode_order(lam)][: m_modes + 1]
        if lam.size < m_modes + 1:
            raise ValueError(f"grid with {op.grid.n_points} points resolves fewer than {m_modes + 1} modes")
        levels.append(lam)
    lam = np.array(levels)
    drift = np.abs(lam[-1, :m_modes] - lam[-2, :m_modes])
    fine = lam[-1]
    dist = np.abs(fine[:, None] - fine[None, :])
    dist[np.diag_indices_from(dist)] = np.inf
    gaps = dist.min(axis=1)[:m_modes]
    return SpectralReport(tuple(o.grid.n_points for o in ops), lam[:, :m_modes], drift, gaps,
                          drift > gaps / 10)
