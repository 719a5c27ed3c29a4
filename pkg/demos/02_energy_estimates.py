# %% [markdown]
# # Energy estimates for the four coefficient classes
#
# Each mode solves `v'' + (|λ_ξ| a(t) + q(t)) v = f̂`.  We integrate the
# modes with RK4 and compare the weighted energy against the bound each
# class predicts.  A margin is `1 - lhs/rhs`, so it must stay nonnegative.

# %%
import numpy as np

from nhwave import coeffs as cf
from nhwave import estimates as est
from nhwave import evolution as ev
from nhwave.operator import assemble_operator, build_grid, compute_eigensystem, harmonic

E = compute_eigensystem(assemble_operator(build_grid(12, 481), harmonic()), 20)

# %% [markdown]
# ## Strictly positive, bounded coefficient
#
# With `a = 2 + sin t` the symmetriser energy `a|V1|² + |V2|²` is
# sandwiched between `min(a,1)|V|²` and `max(a,1)|V|²`, and the bound holds
# in every Sobolev index.  Data: the ground state.

# %%
p1 = cf.profile("2 + sin(t)", "0.5", "Linf1", a0=1.0)
u0 = est.ModeData.from_functions(E, v0=E.right[:, 0])
r1 = est.verify_case1(E, p1, u0, 0.0)
print({k: r1.summary()[k] for k in ("passed", "min_margin", "C")})

# %% [markdown]
# A constant coefficient conserves the energy to round-off:

# %%
sys = ev.assemble_mode_system(E, np.arange(5), cf.profile("1", "1", "Linf1", a0=1.0))
tr = ev.integrate_mode(sys, np.ones((5, 2), complex))
en = ev.energy_trace(tr)
print("relative drift:", np.max(np.abs(en - en[:, :1]) / en[:, :1]))

# %% [markdown]
# ## Hölder, bounded below
#
# `a = 2 + |sin t|^{1/2}` is only Hölder.  The regularised root `λ^ε`
# approaches `√a` like `ε^α` and its derivative blows up like `ε^{α-1}`.

# %%
p2 = cf.profile("2 + pow(abs(sin(t)), 0.5)", "0", "HolderNondeg", a0=2.0, alpha=0.5)
rs = cf.root_estimate_slopes(p2, [2.0 ** -k for k in range(3, 11)])
print("error slope %.3f  derivative slope %.3f" % (rs["error_slope"], rs["derivative_slope"]))
gev = est.ModeData.gevrey(E, 1.0, 1.5, 1.0, 1.0)
r2 = est.verify_case2(E, p2, gev, 1.5)
print("passed", r2.passed, "min margin %.4f" % r2.margins.min(), "k = %.3f" % r2.constants["k"])

# %% [markdown]
# ## Smooth, touching zero
#
# `a = t²` vanishes at `t = 0`.  The quasi-symmetriser with
# `ε = ⟨ξ⟩^{-l/(2σ)}` controls the growth in a Gevrey class.

# %%
p3 = cf.profile("t**2", "0", "Smooth", l=2)
r3 = est.verify_case3(E, p3, gev, 1.5)
print("passed", r3.passed, "σ =", r3.constants["sigma"], "min margin %.4f" % r3.margins.min())

# %% [markdown]
# ## Hölder, touching zero
#
# `a = |sin t|` has a Hölder root of order 1/2.  Running the same `t²`
# profile through this class must agree with the smooth one.

# %%
p4 = cf.profile("abs(sin(t))", "0", "HolderDeg", alpha=1.0)
r4 = est.verify_case4(E, p4, est.ModeData.gevrey(E, 1.0, 1.2, 1.0, 1.0), 1.2)
print("passed", r4.passed, r4.scope, "min margin %.4f" % r4.margins.min())
r4b = est.verify_case4(E, cf.profile("t**2", "0", "HolderDeg", alpha=1.99), gev, 1.5)
print("t² via Hölder class:", r4b.passed, " via smooth class:", r3.passed)
