"""Lyapunov spectrum of ``x_{t+1} = f(x_t)`` by repeated QR re-orthonormalization.

An orthonormal frame is pushed through the Jacobian cocycle
``A(x_{t+n-1}) ... A(x_t)``; at each re-orthonormalization the logs of the
triangular factor's diagonal are accumulated (Kahan-compensated), and their
time average gives the exponents in natural-log units per step.
"""

from dataclasses import asdict, dataclass

import numba
import numpy as np

from . import dynsys
from .exceptions import DegenerateCocycleError

CONVERGENCE_THRESHOLD = 1e-2
_CHUNK = 16384


@dataclass(frozen=True)
class LyapunovSpectrum:
    exponents: tuple
    horizon: int
    burn_in: int
    renorm_period: int
    convergence_residual: float
    threshold: float = CONVERGENCE_THRESHOLD

    @property
    def converged(self):
        return self.convergence_residual < self.threshold

    @property
    def positive_sum(self):
        """Sum of the positive exponents (Ruelle upper bound on entropy)."""
        return float(sum(max(0.0, v) for v in self.exponents))

    def to_dict(self):
        d = asdict(self)
        d["exponents"] = list(self.exponents)
        d["converged"] = self.converged
        return d


@numba.njit(cache=True)
def _cocycle(jacs, Q, acc, comp, since_qr, period, accumulate):
    """Advance frame ``Q`` through ``jacs``; returns (since_qr, bad_index).

    ``bad_index`` is -1 unless a column collapsed to zero norm.
    """
    n = Q.shape[0]
    tmp = np.empty((n, n))
    for t in range(jacs.shape[0]):
        J = jacs[t]
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(n):
                    s += J[i, k] * Q[k, j]
                tmp[i, j] = s
        Q[:, :] = tmp
        since_qr += 1
        if since_qr < period:
            continue
        since_qr = 0
        # modified Gram-Schmidt with one re-orthogonalization pass
        for j in range(n):
            for _pass in range(2):
                for i in range(j):
                    d = 0.0
                    for k in range(n):
                        d += Q[k, i] * Q[k, j]
                    for k in range(n):
                        Q[k, j] -= d * Q[k, i]
            r = 0.0
            for k in range(n):
                r += Q[k, j] * Q[k, j]
            r = np.sqrt(r)
            if not (r > 0.0) or not np.isfinite(r):
                return since_qr, t
            for k in range(n):
                Q[k, j] /= r
            if accumulate:
                y = np.log(r) - comp[j]
                s = acc[j] + y
                comp[j] = (s - acc[j]) - y
                acc[j] = s
    return since_qr, -1


def _run(model, x, steps, Q, acc, comp, since_qr, period, accumulate, offset):
    """Push ``steps`` Jacobians from state ``x``; returns (x, since_qr)."""
    done = 0
    while done < steps:
        n = min(_CHUNK, steps - done)
        states = dynsys.trajectory(model, x, n).states
        jacs = np.ascontiguousarray(dynsys.jacobian(model, states[:-1]))
        since_qr, bad = _cocycle(jacs, Q, acc, comp, since_qr, period, accumulate)
        if bad >= 0:
            step = offset + done + bad
            raise DegenerateCocycleError(
                f"zero pivot during re-orthonormalization at step {step}", step)
        done += n
        x = states[-1]
    return x, since_qr


def spectrum(model, x0, horizon=1_000_000, burn_in=1000, renorm_period=1,
             threshold=CONVERGENCE_THRESHOLD):
    """Estimate the Lyapunov spectrum from ``x0``.

    The first ``burn_in`` steps move the state and frame onto the attractor
    without accumulating; the following ``horizon`` steps are averaged.
    """
    if burn_in < 0 or horizon < 10 * burn_in or horizon < 1:
        raise ValueError("need horizon >= 10 * burn_in >= 0 and horizon >= 1")
    if renorm_period < 1:
        raise ValueError("renorm_period must be >= 1")
    n = model.state_dim
    Q = np.eye(n)
    acc = np.zeros(n)
    comp = np.zeros(n)
    x = np.asarray(x0, dtype=float)
    since_qr = 0
    if burn_in:
        x, since_qr = _run(model, x, burn_in, Q, acc, comp, since_qr, 1, False, 0)

    snapshots = []
    done = 0
    # short chunks keep enough checkpoints inside the last tenth of the run
    chunk = max(1, min(_CHUNK, horizon // 100))
    while done < horizon:
        steps = min(chunk, horizon - done)
        x, since_qr = _run(model, x, steps, Q, acc, comp, since_qr, renorm_period,
                           True, burn_in + done)
        done += steps
        snapshots.append((done, acc.copy()))
    if since_qr:
        # flush a partial period so every step is counted
        _cocycle(np.eye(n)[None], Q, acc, comp, renorm_period - 1, renorm_period, True)
        snapshots[-1] = (done, acc.copy())

    final = acc / horizon
    tail = [s / t for t, s in snapshots if t >= 0.9 * horizon]
    residual = max(float(np.max(np.abs(est - final))) for est in tail)
    order = np.argsort(-final, kind="stable")
    return LyapunovSpectrum(
        exponents=tuple(float(v) for v in final[order]),
        horizon=int(horizon), burn_in=int(burn_in), renorm_period=int(renorm_period),
        convergence_residual=residual, threshold=threshold)


def log_det_average(model, x0, horizon, burn_in=0):
    """Time average of ``log|det A(x_t)|`` over ``horizon`` steps after burn-in."""
    states = dynsys.trajectory(model, x0, burn_in + horizon).states[burn_in:-1]
    total = 0.0
    for start in range(0, horizon, _CHUNK):
        jacs = dynsys.jacobian(model, states[start:start + _CHUNK])
        sign, logdet = np.linalg.slogdet(jacs)
        zero = np.flatnonzero(sign == 0)
        if zero.size:
            step = burn_in + start + int(zero[0])
            raise DegenerateCocycleError(f"det A(x_t) = 0 at step {step}", step)
        total += float(np.sum(logdet))
    return total / horizon


def det_sum_check(model, x0, horizon, burn_in=0):
    """``|mean log|det A(x_t)| - sum of exponents|`` over the same window."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    spec = spectrum(model, x0, horizon=horizon, burn_in=min(burn_in, horizon // 10))
    used_burn = spec.burn_in
    return abs(log_det_average(model, x0, horizon, used_burn) - sum(spec.exponents))
