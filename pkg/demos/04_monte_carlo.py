#!/usr/bin/env python3
"""Observer error over the erasure channel, below and above p*."""

# %%
import numpy as np

from erasure_obs import dynsys, simulate

model, gain = dynsys.builtin("henon")
x0 = np.array([0.1, 0.1])
noise = 1e-6

# %% [markdown]
# Fifty erasure realizations of 10^4 steps, plant noise uniform on
# [0, 1e-6]. The deadbeat gain clears the error after two arrivals in a
# row; what remains is noise amplified through erasure bursts.

# %%
reports = {}
for p in (0.55, 0.7):
    reports[p] = simulate.monte_carlo(model, gain, x0, x0, p, 10_000, 50, noise, master_seed=1)
    rep = reports[p]
    print(f"p = {p}: peak E|e|^2 = {rep.peak_mean_sq_error:.3e} "
          f"({rep.peak_mean_sq_error / noise ** 2:.1e} x noise^2)")
print("ratio:", reports[0.55].peak_mean_sq_error / reports[0.7].peak_mean_sq_error)

# %% [markdown]
# The p = 0.7 peak comes from the single longest burst across the batch, so
# the ratio moves a lot from one master seed to the next.

# %%
for seed in range(4):
    peaks = [simulate.monte_carlo(model, gain, x0, x0, p, 10_000, 50, noise,
                                  master_seed=seed).peak_mean_sq_error for p in (0.55, 0.7)]
    print(f"seed {seed}: ratio {peaks[0] / peaks[1]:.1f}")
