"""Fundamental limits of nonlinear state observation over an erasure channel."""

from .dynsys import ObserverGain, SystemModel, builtin, from_descriptor, trajectory
from .limits import entropy_condition, linear_critical_p, nonlinear_critical_p
from .lyapunov import LyapunovSpectrum, det_sum_check, spectrum
from .observability import bounds_scan, rank_condition
from .riccati import condition_trace, optimal_gain, riccati_step
from .simulate import (covariance_propagate, erasure_sequence, monte_carlo, observe_run,
                       sweep_p)

__all__ = [
    "ObserverGain", "SystemModel", "builtin", "from_descriptor", "trajectory",
    "entropy_condition", "linear_critical_p", "nonlinear_critical_p",
    "LyapunovSpectrum", "det_sum_check", "spectrum",
    "bounds_scan", "rank_condition",
    "condition_trace", "optimal_gain", "riccati_step",
    "covariance_propagate", "erasure_sequence", "monte_carlo", "observe_run", "sweep_p",
]
