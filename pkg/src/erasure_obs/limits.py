"""Closed-form limits on the non-erasure probability.

Everything is kept in the log domain. For an expansion rate ``g`` (log of
the product of unstable eigenvalue moduli, or the sum of positive Lyapunov
exponents) and ``M`` outputs, MSE stability of the observer error requires

    M log(1 - p) + 2 g < 0,   i.e.   p > p* = 1 - exp(-2 g / M).

For ``M > 1`` the M-th root is a literal reading of the product condition;
no tighter multi-output form is attempted.
"""

import math
from dataclasses import asdict, dataclass

from .exceptions import NotConvergedError

TRUNCATION_NOTE = ("negative exponents dropped (positive-part truncation, "
                   "as in the Henon experiment)")
MULTI_OUTPUT_NOTE = "M > 1: critical p uses the M-th root of the product condition"


@dataclass(frozen=True)
class CriticalProbability:
    critical_p: float
    M: int
    log_growth: float
    note: str = ""

    @property
    def critical_q(self):
        """Critical dropout (erasure) rate ``1 - p*``."""
        return 1.0 - self.critical_p

    def lhs(self, p):
        """Log-domain left-hand side ``M log(1-p) + 2 g``."""
        return self.M * math.log1p(-p) + 2.0 * self.log_growth

    def verdict(self, p):
        if not 0 < p < 1:
            raise ValueError("p must lie in (0, 1)")
        lhs = self.lhs(p)
        return LimitVerdict(p=p, M=self.M, lhs=lhs, critical_p=self.critical_p,
                            satisfied=lhs < 0, note=self.note)

    def to_dict(self):
        d = asdict(self)
        d["critical_q"] = self.critical_q
        return d


@dataclass(frozen=True)
class LimitVerdict:
    p: float
    M: int
    lhs: float
    critical_p: float
    satisfied: bool
    note: str = ""

    @property
    def critical_q(self):
        return 1.0 - self.critical_p

    def to_dict(self):
        d = asdict(self)
        d["critical_q"] = self.critical_q
        return d


def _critical(log_growth, M, note):
    if M < 1:
        raise ValueError("M must be >= 1")
    notes = [n for n in (note, MULTI_OUTPUT_NOTE if M > 1 else "") if n]
    p_star = -math.expm1(-2.0 * log_growth / M)
    return CriticalProbability(p_star, int(M), float(log_growth), "; ".join(notes))


def linear_critical_p(eigenvalue_moduli, M):
    """Critical p for a linear plant whose eigenvalues all have modulus > 1."""
    moduli = [float(v) for v in eigenvalue_moduli]
    if not moduli or any(v <= 1.0 for v in moduli):
        raise ValueError("every eigenvalue modulus must exceed 1 for the linear bound to apply")
    return _critical(math.fsum(math.log(v) for v in moduli), M, "")


def nonlinear_critical_p(spectrum, M):
    """Critical p from a Lyapunov spectrum, keeping only positive exponents.

    ``spectrum`` is a :class:`~erasure_obs.lyapunov.LyapunovSpectrum` (must
    be converged) or a plain sequence of exponents.
    """
    if hasattr(spectrum, "exponents"):
        if not spectrum.converged:
            raise NotConvergedError(
                f"spectrum residual {spectrum.convergence_residual:.3g} is above "
                f"threshold {spectrum.threshold:.3g}")
        exponents = spectrum.exponents
    else:
        exponents = spectrum
    exponents = [float(v) for v in exponents]
    growth = ruelle_bound(exponents)
    if growth == 0.0:
        return _critical(0.0, M, "no positive exponents: no limitation")
    note = TRUNCATION_NOTE if any(v < 0 for v in exponents) else ""
    return _critical(growth, M, note)


def ruelle_bound(exponents):
    """Sum of positive exponents; an upper bound on the entropy."""
    return math.fsum(max(0.0, float(v)) for v in exponents)


def entropy_condition(p, M, entropy):
    """Verdict for ``M log(1-p) + 2 H < 0`` given an entropy (or its bound)."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if entropy < 0:
        raise ValueError("entropy must be >= 0")
    return _critical(float(entropy), M, "").verdict(p)
