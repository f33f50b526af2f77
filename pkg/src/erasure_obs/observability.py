"""Observability rank condition and sampled estimates of its Gram bounds.

For ``theta(x) = (h(x), h(f(x)), ..., h(f^{N-1}(x)))`` the Jacobian is
stacked block-row by block-row with the chain rule along the noise-free
orbit: block ``k`` is ``C(x_k) A(x_{k-1}) ... A(x_0)``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dynsys
from .exceptions import DivergenceError

RANK_TOL = 1e-8


@dataclass(frozen=True)
class ObservabilityReport:
    point: np.ndarray
    theta_jacobian: np.ndarray
    gram: np.ndarray
    rank: int
    min_eig: float
    max_eig: float
    satisfied: bool

    def to_dict(self):
        return {
            "point": self.point.tolist(),
            "theta_jacobian": self.theta_jacobian.tolist(),
            "gram": self.gram.tolist(),
            "rank": self.rank,
            "min_eig": self.min_eig,
            "max_eig": self.max_eig,
            "satisfied": self.satisfied,
        }


@dataclass(frozen=True)
class BoundsScan:
    alpha_theta: float
    beta_theta: float
    worst_point: np.ndarray
    satisfied: bool
    failures: tuple = ()

    def to_dict(self):
        return {
            "alpha_theta": self.alpha_theta,
            "beta_theta": self.beta_theta,
            "worst_point": self.worst_point.tolist(),
            "satisfied": self.satisfied,
            "failures": [p.tolist() for p in self.failures],
        }


def theta_jacobian(model, x):
    """Jacobian of the N-step output map, shape ``(..., N*M, N)``.

    Batched over leading axes of ``x``.
    """
    x = np.asarray(x, dtype=float)
    n, m = model.state_dim, model.output_dim
    blocks = []
    prod = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n))
    for k in range(n):
        if not np.isfinite(x).all() or np.abs(x).max(initial=0.0) > dynsys.DIVERGENCE_NORM:
            raise DivergenceError(f"orbit left the finite range after {k} steps", k)
        blocks.append(dynsys.output_jacobian(model, x) @ prod)
        if k < n - 1:
            prod = dynsys.jacobian(model, x) @ prod
            x = dynsys.step(model, x)
    return np.concatenate(blocks, axis=-2).reshape(x.shape[:-1] + (n * m, n))


def _spectra(jac, tol):
    gram = np.swapaxes(jac, -1, -2) @ jac
    gram = 0.5 * (gram + np.swapaxes(gram, -1, -2))
    eig = np.linalg.eigvalsh(gram)
    sv = np.linalg.svd(jac, compute_uv=False)
    rank = np.sum(sv > tol * sv[..., :1], axis=-1)
    return gram, eig, sv, rank


def rank_condition(model, x, tol=RANK_TOL):
    """Check the observability rank condition at ``x``.

    Rank counts singular values above ``tol`` times the largest one.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.asarray(x, dtype=float)
    jac = theta_jacobian(model, x)
    gram, eig, sv, rank = _spectra(jac, tol)
    n = model.state_dim
    return ObservabilityReport(
        point=x, theta_jacobian=jac, gram=gram, rank=int(rank),
        min_eig=float(eig[0]), max_eig=float(eig[-1]), satisfied=bool(rank == n))


def bounds_scan(model, samples, tol=RANK_TOL, workers=1, chunk=4096):
    """Estimate ``alpha_theta``/``beta_theta`` as min/max Gram eigenvalues.

    Points failing the rank condition are listed in ``failures``; the bounds
    are still returned with ``satisfied=False``. Chunks may be spread over
    ``workers`` threads; the reduction runs in sample order afterwards.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise ValueError("samples must be non-empty")

    def work(lo):
        block = samples[lo:lo + chunk]
        _, eig, _, rank = _spectra(theta_jacobian(model, block), tol)
        return eig[:, 0], eig[:, -1], rank

    starts = range(0, samples.shape[0], chunk)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(lo) for lo in starts]
    lo_eig = np.concatenate([p[0] for p in parts])
    hi_eig = np.concatenate([p[1] for p in parts])
    ranks = np.concatenate([p[2] for p in parts])
    bad = ranks < model.state_dim
    worst = int(np.argmin(lo_eig))
    return BoundsScan(
        alpha_theta=float(lo_eig[worst]), beta_theta=float(hi_eig.max()),
        worst_point=samples[worst], satisfied=not bad.any(),
        failures=tuple(samples[bad]))
