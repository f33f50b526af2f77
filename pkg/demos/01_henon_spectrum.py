#!/usr/bin/env python3
"""Lyapunov spectrum of the Henon map and the critical arrival probability."""

# %%
import math

import numpy as np

from erasure_obs import dynsys, limits, lyapunov

model, gain = dynsys.builtin("henon")
x0 = np.array([0.1, 0.1])

# %% [markdown]
# A million QR steps after a thousand burn-in steps. The spectrum should
# sit near (0.42, -1.62); the two exponents must add up to log b because the
# Jacobian determinant is -b at every point.

# %%
spec = lyapunov.spectrum(model, x0, horizon=1_000_000)
print("exponents:", np.round(spec.exponents, 5))
print("sum - log(0.3):", sum(spec.exponents) - math.log(0.3))
print("residual over the last tenth:", spec.convergence_residual)

# %% [markdown]
# Only the positive exponent counts toward the limit; the note says so.

# %%
crit = limits.nonlinear_critical_p(spec, model.output_dim)
print(f"p* = {crit.critical_p:.4f}, q* = {crit.critical_q:.4f}")
print(crit.note)
for p in (0.55, 0.7):
    v = crit.verdict(p)
    print(f"p = {p}: lhs = {v.lhs:+.4f} -> {'ok' if v.satisfied else 'violated'}")
