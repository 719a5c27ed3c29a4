# %% [markdown]
# # Very weak solutions for a distributional coefficient
#
# Take `a = 1 + δ(t - 1/2)`.  No classical solution exists, so we mollify:
# `a_ε = a * ψ_ω(ε)`, solve for each ε and ask how the solutions scale.
# Moderate means polynomial growth in `1/ε`; negligible means faster decay
# than any power.

# %%
import math

import numpy as np

from nhwave import coeffs as cf
from nhwave import estimates as est
from nhwave import veryweak as vw
from nhwave.operator import assemble_operator, build_grid, compute_eigensystem, harmonic

E = compute_eigensystem(assemble_operator(build_grid(12, 481), harmonic()), 20)
u0 = est.ModeData.from_functions(E, v0=E.right[:, 0])
eps = vw.DEFAULT_EPS

# %% [markdown]
# ## Existence
#
# The mollified delta has `sup a_ε ~ ε^{-1}` and `sup a_ε' ~ ε^{-2}`.  The
# solution net itself stays moderate.

# %%
p = cf.profile([1.0, cf.dirac(0.5)], tag="Distributional")
ex = vw.existence_experiment(E, p, u0, 0.0, eps, threads=2)
print("coefficient slopes:", {k: round(v, 3) for k, v in ex.coefficient_slopes.items()})
print("min a_ε:", ex.lower_bound)
print("solution net:", ex.classification.verdict)
for e, n in zip(ex.net.eps[::3], ex.net.norm_v[::3]):
    print(f"  ε = {e:.2e}   ||v_ε|| = {n:.6f}")

# %% [markdown]
# ## Uniqueness
#
# Perturb the coefficient by `e^{-1/ε}`, which is negligible.  The two
# solution nets must then differ by a negligible net too.  Perturbing by
# `ε` instead breaks the hypothesis, and the experiment says so rather
# than claiming anything about the solutions.

# %%
reg = cf.profile("2 + sin(t)", "0.5", "Linf1", a0=1.0)
ok = vw.uniqueness_experiment(E, reg, u0, 0.0, eps, perturbation=lambda e: math.exp(-1 / e))
bad = vw.uniqueness_experiment(E, reg, u0, 0.0, eps, perturbation=lambda e: e)
print("e^{-1/ε}:", ok.verdict, " certified q =", ok.difference.certified_q)
print("ε:       ", bad.verdict)

# %% [markdown]
# ## Consistency
#
# For a regular coefficient the very weak solution converges to the
# classical one, here at first order in ε.

# %%
cs = vw.consistency_experiment(E, reg, u0, 0.0, eps)
print("order %.2f   final relative difference %.2e" % (cs.order, cs.final_relative))
print(np.array2string(cs.differences / cs.reference_norm, precision=2))
