import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from erasure_obs import dynsys, riccati
from erasure_obs.exceptions import DivergenceError

LOG_B = math.log(0.3)


def test_step_examples():
    assert np.allclose(riccati.riccati_step([[1.0]], [[2.0]], [[1.0]], [[1.0]]), [[3.0]])
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    A = np.array([[1.0, 2.0], [0.0, 1.5]])
    R = 0.1 * np.eye(2)
    out = riccati.riccati_step(Q, A, np.zeros((1, 2)), R)
    assert np.allclose(out, A @ Q @ A.T + R)
    assert np.allclose(riccati.riccati_step(np.eye(2), np.eye(2), np.eye(2), np.zeros((2, 2))),
                       0.5 * np.eye(2))


def test_step_rejects_corrupted_q():
    with pytest.raises(np.linalg.LinAlgError):
        riccati.riccati_step([[-1.0]], [[2.0]], [[1.0]], [[0.0]])
    with pytest.raises(ValueError):
        riccati.riccati_step(np.eye(2), np.eye(3), np.eye(2), np.eye(2))


def test_optimal_gain_minimizes_trace():
    rng = np.random.default_rng(1)
    for _ in range(20):
        L = rng.standard_normal((3, 3))
        Q = L @ L.T + 0.1 * np.eye(3)
        A = rng.standard_normal((3, 3))
        C = rng.standard_normal((2, 3))
        K = riccati.optimal_gain(Q, A, C)
        cost = lambda G: np.trace((A - G @ C) @ Q @ (A - G @ C).T)
        base = cost(K)
        for _ in range(10):
            assert cost(K + 1e-3 * rng.standard_normal(K.shape)) > base


def test_optimal_gain_rank_deficient():
    with pytest.raises(np.linalg.LinAlgError, match="rank-deficient"):
        riccati.optimal_gain(np.eye(2), np.eye(2), np.zeros((1, 2)))


def _spd(n, entries):
    L = np.asarray(entries, dtype=float).reshape(n, n)
    return L @ L.T + 0.05 * np.eye(n)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 4), data=st.data(), p=st.floats(0.01, 0.99))
def test_sylvester_identity(n, data, p):
    m = data.draw(st.integers(1, n))
    elems = st.floats(-2.0, 2.0, allow_nan=False)
    Q = _spd(n, data.draw(hnp.arrays(float, n * n, elements=elems)))
    C = data.draw(hnp.arrays(float, (m, n), elements=elems))
    if np.linalg.svd(C, compute_uv=False).min() < 1e-2:
        C = C + np.eye(m, n)
    det = riccati.erasure_determinant(Q, C, p)
    assert abs(det - (1 - p) ** m) <= 1e-8 * (1 - p) ** m


def test_scalar_condition_converges_to_4_1mp():
    model, _ = dynsys.builtin("linear-scalar")
    for p in (0.2, 0.5, 0.75, 0.9):
        tr = riccati.condition_trace(model, [0.0], 400, p)
        assert abs(tr.condition_values[-1] - 4 * (1 - p)) < 1e-12
        if p != 0.75:
            # on the boundary the sign is set by the start-up transient
            assert tr.satisfiable == (p > 0.75)
    # the fixed point of q = 4q + eps - 4q^2/(1+q)
    eps = 1e-3
    q = (3 + eps + math.sqrt((3 + eps) ** 2 + 4 * eps)) / 2
    assert abs(tr.Q0[-1, 0, 0] - q) < 1e-10
    assert abs(tr.gains[-1, 0, 0] - 2.0) < 1e-12


def test_trace_internal_consistency():
    model, _ = dynsys.builtin("henon")
    tr = riccati.condition_trace(model, [0.1, 0.1], 2000, 0.6)
    sym = np.abs(tr.Q0 - np.swapaxes(tr.Q0, -1, -2)).max()
    assert sym <= 1e-10
    assert np.linalg.eigvalsh(tr.Q0)[:, 0].min() > 0
    A = dynsys.jacobian(model, tr.states[:-1])
    det_q = np.linalg.det(tr.Q0)
    recomputed = 0.4 * np.linalg.det(A) ** 2 * det_q[:-1] / det_q[1:]
    assert np.allclose(tr.condition_values, recomputed, rtol=1e-9)
    assert np.allclose(tr.running_log_mean,
                       np.cumsum(tr.log_condition) / np.arange(1, tr.steps + 1))
    assert tr.min_eig_seen >= riccati.EIG_FLOOR and tr.max_eig_seen <= riccati.EIG_CEILING


@pytest.mark.parametrize("p", [0.55, 0.7])
def test_henon_running_mean_telescopes(p):
    # bounded Q0 makes the det ratios telescope: the limit is
    # log(1-p) + 2 mean log|det A| = log(1-p) + 2 log 0.3
    model, _ = dynsys.builtin("henon")
    tr = riccati.condition_trace(model, [0.1, 0.1], 100_000, p)
    assert not tr.flagged
    assert abs(tr.verdict_log_mean - (math.log1p(-p) + 2 * LOG_B)) < 0.02
    assert tr.satisfiable


def test_scaling_invariance_of_converged_condition():
    for name in ("linear-scalar", "linear-diagonal"):
        model, _ = dynsys.builtin(name)
        x0 = np.zeros(model.state_dim)
        ref = riccati.condition_trace(model, x0, 1000, 0.5, epsilon=1e-3)
        for c in (0.01, 3.0, 100.0):
            tr = riccati.condition_trace(model, x0, 1000, 0.5, epsilon=c * 1e-3,
                                         Q_init=c * np.eye(model.state_dim))
            assert abs(tr.condition_values[-1] - ref.condition_values[-1]) < 1e-8


def test_blind_output_is_flagged():
    model, _ = dynsys.linear(np.diag([2.0, 1.5]), [[0.0, 0.0]])
    tr = riccati.condition_trace(model, [0.0, 0.0], 500, 0.5)
    assert tr.flagged and 0 < tr.flag_step < 500
    assert tr.max_eig_seen > riccati.EIG_CEILING
    assert np.all(np.diff(tr.log_det_Q0) > 0)
    with pytest.raises(DivergenceError):
        riccati.require_bounded(tr)


def test_csv_export(tmp_path):
    model, _ = dynsys.builtin("linear-scalar")
    tr = riccati.condition_trace(model, [0.0], 50, 0.5)
    path = tmp_path / "trace.csv"
    tr.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "det_Q0", "condition_value", "running_log_mean"]
    assert len(rows) == 51
    assert float(rows[-1][2]) == tr.condition_values[-1]


def test_condition_trace_preconditions():
    model, _ = dynsys.builtin("linear-scalar")
    for kwargs in ({"p": 0.0}, {"p": 1.0}, {"p": 0.5, "horizon": 0},
                   {"p": 0.5, "epsilon": -1.0}):
        args = {"horizon": 10, **kwargs}
        with pytest.raises(ValueError):
            riccati.condition_trace(model, [0.0], **args)
