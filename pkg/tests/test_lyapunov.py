import json
import math

import numpy as np
import pytest

from erasure_obs import dynsys, lyapunov
from erasure_obs.exceptions import DegenerateCocycleError


def _constant(A):
    model, _ = dynsys.linear(A, np.eye(len(A))[:1])
    return model


def _identity(n=2):
    return dynsys.SystemModel(
        name="identity", state_dim=n, output_dim=1, map=lambda x: x.copy(),
        output=lambda x: x[..., :1],
        map_jacobian=lambda x: np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy())


def test_linear_diagonal_exact():
    model, _ = dynsys.builtin("linear-diagonal")
    spec = lyapunov.spectrum(model, [0.0, 0.0], horizon=20_000, burn_in=100)
    assert abs(spec.exponents[0] - math.log(3)) < 1e-10
    assert abs(spec.exponents[1] - math.log(2)) < 1e-10


def test_non_normal_constant_matrix():
    A = np.array([[0.5, 4.0], [0.0, 2.0]])
    spec = lyapunov.spectrum(_constant(A), [0.0, 0.0], horizon=20_000, burn_in=100)
    assert np.allclose(spec.exponents, [math.log(2.0), math.log(0.5)], atol=1e-10)


def test_identity_map_has_zero_exponents():
    model = _identity()
    spec = lyapunov.spectrum(model, [0.3, 0.4], horizon=1000, burn_in=10)
    assert spec.exponents == (0.0, 0.0)
    assert lyapunov.det_sum_check(model, [0.3, 0.4], 1000) == 0.0


def test_logistic_exponent_is_log_two():
    model, _ = dynsys.builtin("logistic")
    spec = lyapunov.spectrum(model, [0.3], horizon=200_000)
    assert abs(spec.exponents[0] - math.log(2)) < 2e-3


def test_henon_renormalization_period_is_stable():
    model, _ = dynsys.builtin("henon")
    every = lyapunov.spectrum(model, [0.1, 0.1], horizon=100_000)
    sparse = lyapunov.spectrum(model, [0.1, 0.1], horizon=100_000, renorm_period=5)
    assert np.allclose(every.exponents, sparse.exponents, atol=1e-9)


def test_henon_exponents_independent_of_start():
    model, _ = dynsys.builtin("henon")
    orbit = dynsys.trajectory(model, [0.1, 0.1], 10_000).states
    a = lyapunov.spectrum(model, orbit[5000], horizon=1_000_000)
    b = lyapunov.spectrum(model, orbit[9000], horizon=1_000_000)
    tol = 2 * max(a.convergence_residual, b.convergence_residual)
    assert np.all(np.abs(np.subtract(a.exponents, b.exponents)) <= tol)
    assert a.converged and b.converged


def test_det_sum_examples():
    henon, _ = dynsys.builtin("henon")
    assert lyapunov.det_sum_check(henon, [0.1, 0.1], 100_000, burn_in=1000) < 1e-3
    lin, _ = dynsys.builtin("linear-diagonal")
    for T in (10, 1000, 30_000):
        assert lyapunov.det_sum_check(lin, [0.0, 0.0], T) < 1e-12


def test_zero_determinant_aborts():
    model = dynsys.SystemModel(
        name="collapse", state_dim=2, output_dim=1,
        map=lambda x: np.stack([0.5 * x[..., 0], np.zeros_like(x[..., 0])], axis=-1),
        output=lambda x: x[..., :1],
        map_jacobian=lambda x: np.broadcast_to(np.diag([0.5, 0.0]), x.shape[:-1] + (2, 2)).copy())
    with pytest.raises(DegenerateCocycleError):
        lyapunov.log_det_average(model, [1.0, 1.0], 100)


def test_preconditions():
    model, _ = dynsys.builtin("henon")
    with pytest.raises(ValueError):
        lyapunov.spectrum(model, [0.1, 0.1], horizon=5000, burn_in=1000)
    with pytest.raises(ValueError):
        lyapunov.spectrum(model, [0.1, 0.1], horizon=5000, burn_in=10, renorm_period=0)
    with pytest.raises(ValueError):
        lyapunov.det_sum_check(model, [0.1, 0.1], 0)


def test_spectrum_serializes_to_json():
    model, _ = dynsys.builtin("henon")
    spec = lyapunov.spectrum(model, [0.1, 0.1], horizon=20_000)
    data = json.loads(json.dumps(spec.to_dict()))
    assert data["exponents"] == list(spec.exponents)
    assert data["exponents"][0] >= data["exponents"][1]


def test_short_run_not_converged():
    model, _ = dynsys.builtin("henon")
    spec = lyapunov.spectrum(model, [0.1, 0.1], horizon=1000, burn_in=10, threshold=1e-6)
    assert not spec.converged
