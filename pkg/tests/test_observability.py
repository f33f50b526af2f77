import numpy as np
import pytest

from erasure_obs import dynsys, observability
from erasure_obs.exceptions import DivergenceError


@pytest.fixture(scope="module")
def henon():
    return dynsys.builtin("henon")[0]


@pytest.fixture(scope="module")
def attractor(henon):
    return dynsys.trajectory(henon, [0.1, 0.1], 3000).states[1001:]


def _frozen_first_coordinate():
    return dynsys.SystemModel(
        name="frozen", state_dim=2, output_dim=1, map=lambda x: x.copy(),
        output=lambda x: x[..., :1],
        map_jacobian=lambda x: np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy(),
        output_jacobian=lambda x: np.broadcast_to([[1.0, 0.0]], x.shape[:-1] + (1, 2)).copy())


def test_origin_is_identity(henon):
    rep = observability.rank_condition(henon, [0.0, 0.0])
    assert np.array_equal(rep.theta_jacobian, np.eye(2))
    assert rep.rank == 2 and rep.satisfied
    assert rep.min_eig == rep.max_eig == 1.0


def test_stacked_rows_on_attractor(henon, attractor):
    J = observability.theta_jacobian(henon, attractor)
    assert np.array_equal(J[:, 0], np.broadcast_to([1.0, 0.0], (len(attractor), 2)))
    assert np.allclose(J[:, 1, 0], -2.8 * attractor[:, 0], rtol=0, atol=1e-15)
    assert np.all(J[:, 1, 1] == 1.0)


def test_unobservable_model_flagged():
    model = _frozen_first_coordinate()
    rep = observability.rank_condition(model, [0.4, -0.2])
    assert rep.rank == 1 and not rep.satisfied
    scan = observability.bounds_scan(model, [[0.4, -0.2], [1.0, 2.0]])
    assert abs(scan.alpha_theta) < 1e-12
    assert not scan.satisfied and len(scan.failures) == 2


def test_gram_eigenvalues_match_singular_values(henon, attractor):
    for x in attractor[::97]:
        rep = observability.rank_condition(henon, x)
        sv = np.linalg.svd(rep.theta_jacobian, compute_uv=False)
        assert np.allclose(sorted(sv ** 2), [rep.min_eig, rep.max_eig], rtol=1e-8)
        assert np.allclose(rep.gram, rep.gram.T)
        assert rep.min_eig <= rep.max_eig


def test_scan_bounds_and_worst_point(henon, attractor):
    scan = observability.bounds_scan(henon, attractor)
    assert scan.satisfied and scan.alpha_theta > 0
    worst = observability.rank_condition(henon, scan.worst_point)
    assert worst.min_eig == scan.alpha_theta
    single = observability.bounds_scan(henon, [[0.0, 0.0]])
    assert single.alpha_theta == single.beta_theta == 1.0


def test_parallel_scan_matches_sequential(henon, attractor):
    seq = observability.bounds_scan(henon, attractor, chunk=128)
    par = observability.bounds_scan(henon, attractor, workers=4, chunk=128)
    assert seq.to_dict() == par.to_dict()


def test_errors(henon):
    with pytest.raises(ValueError):
        observability.rank_condition(henon, [0.0, 0.0], tol=0.0)
    with pytest.raises(ValueError):
        observability.bounds_scan(henon, np.empty((0, 2)))
    with pytest.raises(DivergenceError):
        observability.rank_condition(henon, [1e7, 0.0])
