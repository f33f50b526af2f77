#!/usr/bin/env python3
"""Observability rank condition on the Henon attractor."""

# %%
import numpy as np

from erasure_obs import dynsys, observability

model, _ = dynsys.builtin("henon")
pts = dynsys.trajectory(model, [0.1, 0.1], 11_000).states[1001:]

# %%
rep = observability.rank_condition(model, [0.0, 0.0])
print("theta-Jacobian at the origin:\n", rep.theta_jacobian)

# %% [markdown]
# Rows are [1, 0] and [-2 a x1, 1], so the determinant is exactly one
# everywhere; the Gram bounds then only depend on how large |x1| gets.

# %%
scan = observability.bounds_scan(model, pts)
J = observability.theta_jacobian(model, pts)
print("alpha_theta =", scan.alpha_theta, "beta_theta =", scan.beta_theta)
print("worst point:", scan.worst_point)
print("determinants all one:", bool(np.all(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0] == 1)))
