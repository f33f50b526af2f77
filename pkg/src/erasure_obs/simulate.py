"""Observer simulation over an IID erasure channel.

The plant runs ``x_{t+1} = f(x_t) + r_t`` and the observer

    xhat_{t+1} = f(xhat_t) + xi_t [K(h(x_t)) - K(h(xhat_t))],

where ``xi_t = 1`` means the packet at time ``t`` arrived. Along the
noise-free orbit the linearized error obeys
``eta_{t+1} = (A(x_t) - xi_t Kt(x_t) C(x_t)) eta_t`` with
``Kt = dK/dy(h(x_t))``; :func:`covariance_propagate` pushes second moments
through it.

Realizations are simulated as vectorized batches of fixed size, so results
do not depend on how many worker threads share the batches.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dynsys, limits, lyapunov, seeding
from .dynsys import DIVERGENCE_NORM

COVARIANCE_LIMIT = DIVERGENCE_NORM ** 2
BATCH = 16
THREADS_ENV = "ERASURE_OBS_THREADS"


def default_workers():
    """Worker count from ``ERASURE_OBS_THREADS`` (0 or unset: CPU count)."""
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0")
    return n or (os.cpu_count() or 1)


def _map_batches(fn, count, workers):
    starts = list(range(0, count, BATCH))
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(min(workers, len(starts))) as pool:
            return list(pool.map(fn, starts))
    return [fn(s) for s in starts]


# ------------------------------------------------------------------ channel

@dataclass(frozen=True)
class ErasureRealization:
    """Arrival bits ``xi_0 .. xi_{T-1}``; ``xi_t`` gates the update at step t."""

    p: float
    xi: np.ndarray
    seed: int

    @property
    def horizon(self):
        return len(self.xi)


def erasure_sequence(p, horizon, seed):
    """IID Bernoulli(p) arrivals; bit ``t`` depends only on ``(seed, t)``.

    Bits are thresholded uniforms, so for a fixed seed raising ``p`` only
    turns erasures into arrivals.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return ErasureRealization(float(p), seeding.uniforms(seed, horizon) < p, int(seed))


# ------------------------------------------------------------ nonlinear runs

@dataclass(frozen=True)
class ObserverRun:
    plant_states: np.ndarray
    observer_states: np.ndarray
    error_norms: np.ndarray
    realization: ErasureRealization
    diverged: bool = False
    divergence_step: int = -1


def _observe_batch(model, gain, x0, xhat0, xi, noise, keep_states=False):
    """Simulate a batch of realizations.

    ``xi`` is ``(R, T)`` and ``noise`` ``(R, T, N)``. Returns squared error
    norms ``(R, T+1)``, divergence steps ``(R,)`` (-1 if none) and, when
    requested, the plant and observer states.
    """
    R, T = xi.shape
    n = model.state_dim
    f, h, K = model.map, model.output, gain.gain
    x = np.broadcast_to(np.asarray(x0, dtype=float), (R, n)).copy()
    xh = np.broadcast_to(np.asarray(xhat0, dtype=float), (R, n)).copy()
    sq = np.empty((R, T + 1))
    sq[:, 0] = np.sum((x - xh) ** 2, axis=-1)
    div = np.full(R, -1)
    if keep_states:
        plant = np.empty((R, T + 1, n))
        obs = np.empty((R, T + 1, n))
        plant[:, 0], obs[:, 0] = x, xh
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            fx = f(x)
            corr = K(h(x)) - K(h(xh))
            xh = np.where(xi[:, t, None], f(xh) + corr, f(xh))
            x = fx + noise[:, t]
            if keep_states:
                plant[:, t + 1], obs[:, t + 1] = x, xh
            bad = ~((np.abs(xh) <= DIVERGENCE_NORM) & (np.abs(x) <= DIVERGENCE_NORM)).all(-1)
            fresh = bad & (div < 0)
            div[fresh] = t + 1
            sq[:, t + 1] = np.sum((x - xh) ** 2, axis=-1)
            if bad.any():
                # park diverged rows on a harmless state; their errors read inf
                x[bad] = 0.0
                xh[bad] = 0.0
            sq[div >= 0, t + 1] = np.inf
    if keep_states:
        return sq, div, plant, obs
    return sq, div


def observe_run(model, gain, x0, xhat0, realization, noise_amplitude=0.0, noise_seed=0,
                horizon=None):
    """Run plant and observer along one erasure realization.

    On divergence the run is truncated at the first bad step and flagged.
    """
    T = realization.horizon if horizon is None else int(horizon)
    if T > realization.horizon:
        raise ValueError("realization shorter than the requested horizon")
    dynsys._as_state(model, x0)
    dynsys._as_state(model, xhat0)
    xi = realization.xi[None, :T]
    noise = dynsys.plant_noise(noise_seed, T, model.state_dim, noise_amplitude)[None]
    sq, div, plant, obs = _observe_batch(model, gain, x0, xhat0, xi, noise, keep_states=True)
    stop = T + 1 if div[0] < 0 else int(div[0]) + 1
    plant, obs = plant[0, :stop], obs[0, :stop]
    return ObserverRun(
        plant_states=plant, observer_states=obs,
        error_norms=np.linalg.norm(plant - obs, axis=-1), realization=realization,
        diverged=bool(div[0] >= 0), divergence_step=int(div[0]))


@dataclass(frozen=True)
class MonteCarloReport:
    p: float
    realizations: int
    mean_sq_error: np.ndarray
    peak_mean_sq_error: float
    master_seed: int
    noise_amplitude: float = 0.0
    burn_in: int = 0
    diverged_runs: int = 0
    divergence_steps: tuple = field(default_factory=tuple)

    @property
    def diverged(self):
        return self.diverged_runs > 0

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "mean_sq_error"])
            for t, v in enumerate(self.mean_sq_error):
                w.writerow([t, f"{v:.17g}"])


def _peak(series, burn_in):
    window = series[burn_in:]
    return float(np.max(window)) if window.size else float("nan")


def monte_carlo(model, gain, x0, xhat0, p, horizon, realizations, noise_amplitude=0.0,
                master_seed=0, burn_in=0, workers=None):
    """Average ``||e_t||^2`` over independent erasure/noise realizations.

    Realization ``r`` draws its erasure bits and plant noise from seeds
    derived from ``(master_seed, r)``. The peak is taken over
    ``t >= burn_in``.
    """
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    n = model.state_dim

    def run(lo):
        idx = range(lo, min(lo + BATCH, realizations))
        xi = np.stack([erasure_sequence(
            p, horizon, seeding.derive_seed(master_seed, r, seeding.ERASURE)).xi for r in idx])
        noise = np.stack([dynsys.plant_noise(
            seeding.derive_seed(master_seed, r, seeding.PLANT_NOISE), horizon, n,
            noise_amplitude) for r in idx])
        return _observe_batch(model, gain, x0, xhat0, xi, noise)

    parts = _map_batches(run, realizations, workers)
    sq = np.concatenate([s for s, _ in parts])
    div = np.concatenate([d for _, d in parts])
    mean = np.add.reduce(sq, axis=0) / realizations
    return MonteCarloReport(
        p=float(p), realizations=int(realizations), mean_sq_error=mean,
        peak_mean_sq_error=_peak(mean, burn_in), master_seed=int(master_seed),
        noise_amplitude=float(noise_amplitude), burn_in=int(burn_in),
        diverged_runs=int(np.sum(div >= 0)), divergence_steps=tuple(int(d) for d in div))


# ------------------------------------------------------------- linearized

@dataclass(frozen=True)
class CovarianceTrace:
    Sigma: np.ndarray
    traces: np.ndarray
    peak_trace: float
    diverged: bool = False
    divergence_step: int = -1


def linearized_matrices(model, gain, x0, horizon):
    """Open-loop ``A(x_t)`` and closed-loop ``A - Kt C`` along the noise-free orbit."""
    states = dynsys.trajectory(model, x0, horizon).states[:-1]
    A = dynsys.jacobian(model, states)
    C = dynsys.output_jacobian(model, states)
    Kt = dynsys.gain_jacobian(model, gain, model.output(states))
    return A, A - Kt @ C


def _covariance_batch(A, Acl, xi, Sigma0, W, keep=False):
    """Propagate ``(R, N, N)`` second moments; returns traces, divergence steps[, Sigmas]."""
    R, T = xi.shape
    S = np.broadcast_to(Sigma0, (R,) + Sigma0.shape).copy()
    tr = np.empty((R, T + 1))
    tr[:, 0] = np.trace(Sigma0)
    div = np.full(R, -1)
    At, Aclt = np.swapaxes(A, -1, -2), np.swapaxes(Acl, -1, -2)
    if keep:
        out = np.empty((R, T + 1) + Sigma0.shape)
        out[:, 0] = S
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            S = np.where(xi[:, t, None, None], Acl[t] @ S @ Aclt[t], A[t] @ S @ At[t]) + W
            S = 0.5 * (S + np.swapaxes(S, -1, -2))
            tr[:, t + 1] = np.trace(S, axis1=-2, axis2=-1)
            bad = ~(tr[:, t + 1] <= COVARIANCE_LIMIT)
            if keep:
                out[:, t + 1] = S
            if bad.any():
                div[bad & (div < 0)] = t + 1
                S[bad] = 0.0
            tr[div >= 0, t + 1] = np.inf
    if keep:
        return tr, div, out
    return tr, div


def covariance_propagate(model, gain, x0, Sigma0, realization, process_noise=None,
                         horizon=None):
    """Second moment of the linearized error for one erasure realization.

    ``Sigma_{t+1} = Acal Sigma_t Acal' + W`` with
    ``Acal = A(x_t) - xi_t Kt(x_t) C(x_t)`` and ``W = process_noise``
    (zero by default).
    """
    T = realization.horizon if horizon is None else int(horizon)
    n = model.state_dim
    Sigma0 = np.atleast_2d(np.asarray(Sigma0, dtype=float))
    if Sigma0.shape != (n, n):
        raise dynsys.DimensionError(f"Sigma0 must be {n}x{n}")
    if not np.allclose(Sigma0, Sigma0.T) or np.linalg.eigvalsh(Sigma0)[0] < -1e-12:
        raise ValueError("Sigma0 must be symmetric positive semi-definite")
    W = np.zeros((n, n)) if process_noise is None else np.atleast_2d(process_noise)
    A, Acl = linearized_matrices(model, gain, x0, T)
    tr, div, S = _covariance_batch(A, Acl, realization.xi[None, :T], Sigma0, W, keep=True)
    return CovarianceTrace(Sigma=S[0], traces=tr[0], peak_trace=float(np.max(tr[0])),
                           diverged=bool(div[0] >= 0), divergence_step=int(div[0]))


def expected_covariance(model, gain, x0, Sigma0, p, horizon, process_noise=None):
    """Exact ``E[eta eta']`` over the erasures along the noise-free orbit.

    ``Sigma_{t+1} = p Acl Sigma Acl' + (1-p) A Sigma A' + W``; independent of
    any sampling, used as an oracle for the Monte Carlo averages.
    """
    n = model.state_dim
    A, Acl = linearized_matrices(model, gain, x0, horizon)
    W = np.zeros((n, n)) if process_noise is None else np.atleast_2d(process_noise)
    S = np.atleast_2d(np.asarray(Sigma0, dtype=float))
    out = np.empty((horizon + 1, n, n))
    out[0] = S
    for t in range(horizon):
        S = p * Acl[t] @ S @ Acl[t].T + (1 - p) * A[t] @ S @ A[t].T + W
        out[t + 1] = S
    return out


# -------------------------------------------------------------------- sweep

@dataclass(frozen=True)
class SweepPoint:
    p: float
    peak: float
    peak_ratio: float
    diverged: bool
    diverged_runs: int


@dataclass(frozen=True)
class SweepResult:
    points: tuple
    mode: str
    critical_p: float | None
    realizations: int
    horizon: int
    master_seed: int
    noise_amplitude: float

    def write_csv(self, path):
        crit = "" if self.critical_p is None else f"{self.critical_p:.17g}"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["p", "peak", "diverged_flag", "critical_p"])
            for pt in self.points:
                w.writerow([f"{pt.p:.17g}", f"{pt.peak:.17g}", int(pt.diverged), crit])


def noise_covariance(noise_amplitude, n):
    """Covariance of independent uniform ``[0, a]`` components: ``a^2/12 I``."""
    return noise_amplitude ** 2 / 12.0 * np.eye(n)


def _linearized_peaks(model, gain, x0, p_grid, horizon, realizations, master_seed,
                      noise_amplitude, burn_in, workers):
    n = model.state_dim
    if noise_amplitude > 0:
        W = noise_covariance(noise_amplitude, n)
        Sigma0 = W.copy()
    else:
        W, Sigma0 = np.zeros((n, n)), np.eye(n)
    A, Acl = linearized_matrices(model, gain, x0, horizon)
    u = [seeding.uniforms(seeding.derive_seed(master_seed, r, seeding.ERASURE), horizon)
         for r in range(realizations)]
    scale = float(np.trace(Sigma0))
    points = []
    for p in p_grid:
        def run(lo, p=p):
            xi = np.stack(u[lo:lo + BATCH]) < p
            return _covariance_batch(A, Acl, xi, Sigma0, W)

        parts = _map_batches(run, realizations, workers)
        tr = np.concatenate([t for t, _ in parts])
        div = np.concatenate([d for _, d in parts])
        mean = np.add.reduce(tr, axis=0) / realizations
        peak = _peak(mean, burn_in)
        n_div = int(np.sum(div >= 0))
        points.append(SweepPoint(float(p), peak, peak / scale, n_div > 0, n_div))
    return points


def _full_peaks(model, gain, x0, xhat0, p_grid, horizon, realizations, master_seed,
                noise_amplitude, burn_in, workers):
    n = model.state_dim
    x0 = np.asarray(x0, dtype=float)
    xhat0 = x0 if xhat0 is None else np.asarray(xhat0, dtype=float)
    if noise_amplitude > 0:
        scale = float(np.trace(noise_covariance(noise_amplitude, n)))
    else:
        scale = float(np.sum((x0 - xhat0) ** 2)) or 1.0
    points = []
    for p in p_grid:
        rep = monte_carlo(model, gain, x0, xhat0, p, horizon, realizations, noise_amplitude,
                          master_seed, burn_in, workers)
        points.append(SweepPoint(float(p), rep.peak_mean_sq_error,
                                 rep.peak_mean_sq_error / scale, rep.diverged,
                                 rep.diverged_runs))
    return points


def sweep_p(model, gain, x0, p_grid, horizon, realizations, mode="linearized",
            master_seed=0, noise_amplitude=1e-6, xhat0=None, burn_in=0, critical_p=None,
            workers=None):
    """Peak error statistic across non-erasure probabilities.

    ``linearized``: the realization-averaged trace of the linearized error
    covariance, driven by the plant-noise covariance and started from it,
    maximized over ``t >= burn_in``. ``full``: the Monte Carlo peak of
    ``||e_t||^2`` for the nonlinear observer. Every ``p`` reuses the same
    per-realization uniforms, so the channel draws are coupled across the
    grid. ``peak_ratio`` divides by the noise floor (or the initial scale).
    """
    grid = sorted(float(p) for p in p_grid)
    if not grid or any(not 0 < p < 1 for p in grid):
        raise ValueError("p_grid values must lie in (0, 1)")
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    if mode == "linearized":
        points = _linearized_peaks(model, gain, x0, grid, horizon, realizations, master_seed,
                                   noise_amplitude, burn_in, workers)
    elif mode == "full":
        points = _full_peaks(model, gain, x0, xhat0, grid, horizon, realizations, master_seed,
                             noise_amplitude, burn_in, workers)
    else:
        raise ValueError(f"mode must be 'linearized' or 'full', got {mode!r}")
    if critical_p is None:
        critical_p = estimate_critical_p(model, x0)
    return SweepResult(tuple(points), mode, critical_p, int(realizations), int(horizon),
                       int(master_seed), float(noise_amplitude))


def estimate_critical_p(model, x0, horizon=100_000, burn_in=1000):
    """Critical p from a Lyapunov spectrum started at ``x0``; None if unavailable."""
    try:
        spec = lyapunov.spectrum(model, x0, horizon=horizon, burn_in=burn_in)
        return limits.nonlinear_critical_p(spec, model.output_dim).critical_p
    except (ArithmeticError, ValueError):
        return None
