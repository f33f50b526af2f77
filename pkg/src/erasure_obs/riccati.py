"""Riccati-like recursion behind the erasure necessary condition.

Along a noise-free orbit ``x_{t+1} = f(x_t)``,

    Q0(x_{t+1}) = A Q0 A' + R - A Q0 C' (I_M + C Q0 C')^{-1} C Q0 A'

with ``A = A(x_t)``, ``C = C(x_t)``. MSE stability of the linearized error
requires, pointwise,

    (1 - p)^M det(A)^2 det Q0(x_t) / det Q0(x_{t+1}) < 1.

Taking logs and averaging along the orbit, the det Q0 ratios telescope, so
while Q0 stays bounded above and below the running mean tends to
``M log(1 - p) + 2 * mean log|det A(x_t)|``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import dynsys
from .exceptions import DimensionError, DivergenceError

EIG_FLOOR = 1e-12
EIG_CEILING = 1e12


@dataclass(frozen=True)
class RiccatiTrace:
    states: np.ndarray
    Q0: np.ndarray
    gains: np.ndarray
    log_det_Q0: np.ndarray
    log_condition: np.ndarray
    running_log_mean: np.ndarray
    p: float
    min_eig_seen: float
    max_eig_seen: float
    flagged: bool = False
    flag_step: int = -1

    @property
    def condition_values(self):
        return np.exp(self.log_condition)

    @property
    def steps(self):
        return len(self.log_condition)

    @property
    def verdict_log_mean(self):
        """Running log-mean at the last completed step."""
        return float(self.running_log_mean[-1]) if self.steps else float("nan")

    @property
    def satisfiable(self):
        return self.verdict_log_mean < 0

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "det_Q0", "condition_value", "running_log_mean"])
            for t in range(self.steps):
                w.writerow([t, f"{np.exp(self.log_det_Q0[t]):.17g}",
                            f"{np.exp(self.log_condition[t]):.17g}",
                            f"{self.running_log_mean[t]:.17g}"])


def _check_square(name, M, n):
    if M.shape != (n, n):
        raise DimensionError(f"{name} must be {n}x{n}, got {M.shape}")


def riccati_step(Q0, A, C, R):
    """One step of the Riccati-like recursion, symmetrized."""
    Q0, A, C, R = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (Q0, A, C, R))
    n = Q0.shape[0]
    _check_square("Q0", Q0, n)
    _check_square("A", A, n)
    _check_square("R", R, n)
    if C.shape[1] != n:
        raise DimensionError(f"C must have {n} columns, got {C.shape}")
    m = C.shape[0]
    AQ = A @ Q0
    S = np.eye(m) + C @ Q0 @ C.T
    if np.linalg.cond(S) > 1e14:
        raise np.linalg.LinAlgError("I + C Q0 C' is numerically singular; Q0 is not PSD")
    AQC = AQ @ C.T
    X = AQ @ A.T + R - AQC @ np.linalg.solve(S, AQC.T)
    return 0.5 * (X + X.T)


def optimal_gain(Q, A, C):
    """Trace-minimizing gain ``A Q C' (C Q C')^{-1}`` (N x M)."""
    Q, A, C = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (Q, A, C))
    CQC = C @ Q @ C.T
    if np.linalg.matrix_rank(CQC) < CQC.shape[0]:
        raise np.linalg.LinAlgError(
            "C Q C' is singular: the output map is rank-deficient at this state")
    return np.linalg.solve(CQC.T, (A @ Q @ C.T).T).T


def erasure_determinant(Q, C, p):
    """``det(I_N - p C'(C Q C')^{-1} C Q)``; equals ``(1 - p)^M``."""
    Q, C = np.atleast_2d(Q), np.atleast_2d(C)
    n = Q.shape[0]
    G = C.T @ np.linalg.solve(C @ Q @ C.T, C @ Q)
    return float(np.linalg.det(np.eye(n) - p * G))


def condition_trace(model, x0, horizon, p, epsilon=1e-3, Q_init=None):
    """Propagate Q0 along the noise-free orbit and record the condition.

    ``R = epsilon * I``. Stops early (``flagged=True``) when an eigenvalue of
    Q0 leaves ``[1e-12, 1e12]``.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    n, m = model.state_dim, model.output_dim
    Q = np.eye(n) if Q_init is None else np.array(Q_init, dtype=float)
    _check_square("Q_init", Q, n)
    R = epsilon * np.eye(n)

    states = dynsys.trajectory(model, x0, horizon).states
    A = dynsys.jacobian(model, states[:-1])
    C = dynsys.output_jacobian(model, states[:-1])
    _, log_det_A = np.linalg.slogdet(A)

    Qs = np.empty((horizon + 1, n, n))
    Qs[0] = Q
    eye_m = np.eye(m)
    kept = horizon
    flag_step = -1
    block = 1024
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, horizon, block):
            stop = min(start + block, horizon)
            for t in range(start, stop):
                AQ = A[t] @ Q
                AQC = AQ @ C[t].T
                S = eye_m + C[t] @ Q @ C[t].T
                X = AQ @ A[t].T + R - AQC @ np.linalg.solve(S, AQC.T)
                Q = 0.5 * (X + X.T)
                Qs[t + 1] = Q
            bad = _first_unbounded(Qs[start + 1:stop + 1])
            if bad is not None:
                flag_step = start + 1 + bad
                kept = flag_step - 1
                break

    offending = Qs[flag_step] if flag_step >= 0 else None
    Qs = Qs[:kept + 1]
    eigs = np.linalg.eigvalsh(Qs)
    lo, hi = float(eigs[:, 0].min()), float(eigs[:, -1].max())
    if offending is not None:
        if np.isfinite(offending).all():
            bad_eigs = np.linalg.eigvalsh(offending)
            lo, hi = min(lo, float(bad_eigs[0])), max(hi, float(bad_eigs[-1]))
        else:
            hi = float("inf")
    log_det_Q = 2.0 * np.sum(np.log(np.diagonal(np.linalg.cholesky(Qs), axis1=-2, axis2=-1)),
                             axis=-1)
    CQ = C[:kept] @ Qs[:kept]
    AQC = A[:kept] @ np.swapaxes(CQ, -1, -2)
    CQC = CQ @ np.swapaxes(C[:kept], -1, -2)
    with np.errstate(all="ignore"):
        try:
            gains = np.swapaxes(np.linalg.solve(np.swapaxes(CQC, -1, -2),
                                                np.swapaxes(AQC, -1, -2)), -1, -2)
        except np.linalg.LinAlgError:
            gains = np.array([_gain_or_nan(q, a, c)
                              for q, a, c in zip(Qs[:kept], A[:kept], C[:kept])])

    log_cond = (m * np.log1p(-p) + 2.0 * log_det_A[:kept]
                + log_det_Q[:-1] - log_det_Q[1:])
    running = np.cumsum(log_cond) / np.arange(1, kept + 1)
    return RiccatiTrace(
        states=states[:kept + 1], Q0=Qs, gains=gains,
        log_det_Q0=log_det_Q, log_condition=log_cond, running_log_mean=running,
        p=float(p), min_eig_seen=lo, max_eig_seen=hi,
        flagged=flag_step >= 0, flag_step=flag_step)


def _first_unbounded(Qs):
    finite = np.isfinite(Qs).all(axis=(-2, -1))
    eigs = np.full(Qs.shape[:-1], np.nan)
    eigs[finite] = np.linalg.eigvalsh(Qs[finite])
    ok = finite & (eigs[:, 0] >= EIG_FLOOR) & (eigs[:, -1] <= EIG_CEILING)
    if ok.all():
        return None
    return int(np.argmin(ok))


def _gain_or_nan(Q, A, C):
    try:
        return optimal_gain(Q, A, C)
    except np.linalg.LinAlgError:
        return np.full((A.shape[0], C.shape[0]), np.nan)


def require_bounded(trace):
    """Raise when the trace stopped because Q0 lost its bounds."""
    if trace.flagged:
        raise DivergenceError(
            f"Q0 left [{EIG_FLOOR:g}, {EIG_CEILING:g}] at step {trace.flag_step}",
            trace.flag_step)
    return trace
