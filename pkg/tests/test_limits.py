import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erasure_obs import dynsys, limits, lyapunov
from erasure_obs.exceptions import NotConvergedError

positive = st.floats(1e-3, 5.0)


def test_linear_examples():
    assert limits.linear_critical_p([2.0], 1).critical_p == 0.75
    assert abs(limits.linear_critical_p([2.0, 3.0], 1).critical_p - 35 / 36) < 1e-15
    two = limits.linear_critical_p([2.0, 3.0], 2)
    assert abs(two.critical_p - 5 / 6) < 1e-15
    assert "M-th root" in two.note


def test_linear_rejects_stable_modes():
    with pytest.raises(ValueError, match="exceed 1"):
        limits.linear_critical_p([2.0, 0.5], 1)
    with pytest.raises(ValueError):
        limits.linear_critical_p([2.0], 0)


def test_nonlinear_examples():
    henon = limits.nonlinear_critical_p([0.426, -1.63], 1)
    assert abs(henon.critical_p - 0.5734) < 5e-5
    assert henon.note == limits.TRUNCATION_NOTE
    assert abs(henon.critical_q - 0.4266) < 5e-5
    assert limits.nonlinear_critical_p([math.log(2)], 1).critical_p == pytest.approx(0.75, abs=1e-15)
    none = limits.nonlinear_critical_p([0.0, 0.0], 1)
    assert none.critical_p == 0.0 and "no positive" in none.note


def test_linear_and_nonlinear_agree_on_constant_jacobian():
    model, _ = dynsys.builtin("linear-diagonal")
    spec = lyapunov.spectrum(model, [0.0, 0.0], horizon=10_000, burn_in=100)
    for M in (1, 2):
        a = limits.nonlinear_critical_p(spec, M).critical_p
        b = limits.linear_critical_p([2.0, 3.0], M).critical_p
        assert abs(a - b) < 1e-10


def test_unconverged_spectrum_rejected():
    model, _ = dynsys.builtin("henon")
    spec = lyapunov.spectrum(model, [0.1, 0.1], horizon=1000, burn_in=10, threshold=1e-9)
    with pytest.raises(NotConvergedError):
        limits.nonlinear_critical_p(spec, 1)


def test_entropy_examples():
    ok = limits.entropy_condition(0.7, 1, 0.426)
    assert ok.satisfied and abs(ok.lhs - (-0.35197)) < 1e-5
    bad = limits.entropy_condition(0.55, 1, 0.426)
    assert not bad.satisfied and abs(bad.lhs - 0.05349) < 1e-5
    for p in (0.01, 0.5, 0.99):
        assert limits.entropy_condition(p, 1, 0.0).satisfied
    with pytest.raises(ValueError):
        limits.entropy_condition(0.5, 1, -0.1)
    with pytest.raises(ValueError):
        limits.entropy_condition(1.0, 1, 0.1)


def test_verdict_serializes():
    v = limits.nonlinear_critical_p([0.426, -1.63], 1).verdict(0.7)
    data = json.loads(json.dumps(v.to_dict()))
    assert data["satisfied"] is True
    assert data["critical_q"] == pytest.approx(1 - data["critical_p"])


@settings(max_examples=200, deadline=None)
@given(g=positive, M=st.integers(1, 4))
def test_boundary_lhs_is_zero(g, M):
    crit = limits.nonlinear_critical_p([g], M)
    assert 0.0 <= crit.critical_p <= 1.0
    if crit.critical_p < 1.0:
        assert abs(crit.lhs(crit.critical_p)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(g=positive, M=st.integers(1, 4), p=st.floats(0.001, 0.999))
def test_satisfied_iff_above_critical(g, M, p):
    crit = limits.nonlinear_critical_p([g], M)
    if abs(p - crit.critical_p) > 1e-9:
        assert crit.verdict(p).satisfied == (p > crit.critical_p)


@settings(max_examples=100, deadline=None)
@given(a=positive, b=positive, M=st.integers(1, 3))
def test_monotone_in_exponents_and_outputs(a, b, M):
    lo, hi = sorted((a, b))
    assert (limits.nonlinear_critical_p([lo, 0.1], M).critical_p
            <= limits.nonlinear_critical_p([hi, 0.1], M).critical_p)
    assert (limits.nonlinear_critical_p([a, b], M + 1).critical_p
            <= limits.nonlinear_critical_p([a, b], M).critical_p)


def test_grid_monotonicity():
    exps = np.linspace(0.01, 3.0, 50)
    ps = [limits.nonlinear_critical_p([e], 1).critical_p for e in exps]
    assert np.all(np.diff(ps) >= 0)
