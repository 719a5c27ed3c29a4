# %% [markdown]
# # Spectrum and the non-harmonic transform
#
# Discretise `H = -d²/dx² + V(x)` on `[-R, R]` with Dirichlet ends and
# look at its lowest modes.  For the harmonic potential the eigenvalues
# are the odd integers, which gives a free accuracy check.

# %%
import numpy as np

from nhwave.operator import (assemble_operator, build_grid, compute_eigensystem, harmonic,
                             harmonic_complex, verify_discreteness)
from nhwave.nhfourier import forward, inverse, parseval_pairing, sobolev_norm

grid = build_grid(12, 481)
E = compute_eigensystem(assemble_operator(grid, harmonic()), 10)
print(np.round(E.eigenvalues.real, 8))
print("max error vs 2ξ+1:", np.max(np.abs(E.eigenvalues - (2 * np.arange(10) + 1))))

# %% [markdown]
# Refining the grid should not move the low eigenvalues.

# %%
rep = verify_discreteness([assemble_operator(build_grid(12, n), harmonic()) for n in (241, 481)], 10)
print("max drift:", rep.drift.max(), "stable:", rep.stable)

# %% [markdown]
# Now a non-self-adjoint potential, `x² + i x e^{-x²}`.  It is PT-symmetric,
# so the spectrum stays real, but left and right eigenvectors differ and
# the transform needs both.

# %%
C = compute_eigensystem(assemble_operator(grid, harmonic_complex()), 20)
print("max |Im λ|:", np.max(np.abs(C.eigenvalues.imag)))
print("||left - right||:", np.max(np.abs(C.left - C.right)))
print("biorthogonality defect:", np.max(np.abs(C.biorthogonality() - np.eye(20))))

# %% [markdown]
# Forward transform with the left system, inverse with the right one.
# The pairing of coefficients reproduces the L² norm.

# %%
rng = np.random.default_rng(0)
f = C.right @ (rng.standard_normal(20) + 1j * rng.standard_normal(20))
c = forward(f, C)
print("pairing / ||f||²:", (parseval_pairing(c, c) / grid.norm(f) ** 2).real)
print("round trip:", grid.norm(inverse(c).values - f) / grid.norm(f))
print("H^1 norm:", sobolev_norm(c, 1.0, imag_tol=None).value)
