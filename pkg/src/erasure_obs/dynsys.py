"""Discrete-time system models, trajectories and the built-in examples.

All model callables act on the last axis and broadcast over any leading
axes: ``map`` takes ``(..., N)`` to ``(..., N)``, ``output`` takes
``(..., N)`` to ``(..., M)``, and the Jacobians return ``(..., N, N)`` and
``(..., M, N)``. The Monte Carlo code relies on this to step many
realizations at once.
"""

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from . import seeding
from .exceptions import DimensionError, DivergenceError

DIVERGENCE_NORM = 1e12
FD_STEP = 1e-6


@dataclass(frozen=True)
class SystemModel:
    """``x_{t+1} = f(x_t)``, ``y_t = h(x_t)`` with optional analytic Jacobians.

    A missing Jacobian switches that derivative to central differences.
    """

    name: str
    state_dim: int
    output_dim: int
    map: Callable[[np.ndarray], np.ndarray]
    output: Callable[[np.ndarray], np.ndarray]
    map_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    output_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    description: str = ""
    # optional compiled loop: iterate(x0, noise) -> states, noise shape (T, N)
    iterate: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.state_dim < 1:
            raise DimensionError("state_dim must be >= 1")
        if not 1 <= self.output_dim <= self.state_dim:
            raise DimensionError(
                f"output_dim must lie in [1, {self.state_dim}], got {self.output_dim}")

    @property
    def jacobian_mode(self):
        if self.map_jacobian is not None and self.output_jacobian is not None:
            return "analytic"
        return "finite-difference"


@dataclass(frozen=True)
class ObserverGain:
    """Output-injection gain ``K: Y -> X`` with ``K(0) = 0``.

    The gain only ever sees an output value, never the channel state, so it
    cannot depend on the erasure history.
    """

    gain: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    description: str = ""

    def __call__(self, y):
        return self.gain(y)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    noise_amplitude: float = 0.0
    seed: int = 0

    @property
    def horizon(self):
        return len(self.states) - 1


def _as_state(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.state_dim,):
        raise DimensionError(
            f"{model.name}: expected state of dimension N={model.state_dim}, "
            f"got shape {x.shape}")
    return x


def finite_difference_jacobian(fun, x, out_dim):
    """Central-difference Jacobian of ``fun`` at ``x`` (batched over leading axes).

    Step per coordinate is ``max(1e-6, 1e-6 * |x_i|)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    jac = np.empty(x.shape[:-1] + (out_dim, n))
    for i in range(n):
        h = np.maximum(FD_STEP, FD_STEP * np.abs(x[..., i]))
        dx = np.zeros_like(x)
        dx[..., i] = h
        jac[..., :, i] = (fun(x + dx) - fun(x - dx)) / (2.0 * h)[..., None]
    return jac


def step(model, x):
    """One noise-free step ``f(x)``."""
    return np.asarray(model.map(_as_state(model, x)), dtype=float)


def jacobian(model, x):
    """State Jacobian ``A(x) = df/dx``."""
    x = _as_state(model, x)
    if not np.all(np.isfinite(x)):
        raise ValueError("jacobian requested at a non-finite state")
    if model.map_jacobian is not None:
        return np.asarray(model.map_jacobian(x), dtype=float)
    return finite_difference_jacobian(model.map, x, model.state_dim)


def output_jacobian(model, x):
    """Output Jacobian ``C(x) = dh/dx``."""
    x = _as_state(model, x)
    if not np.all(np.isfinite(x)):
        raise ValueError("output jacobian requested at a non-finite state")
    if model.output_jacobian is not None:
        return np.asarray(model.output_jacobian(x), dtype=float)
    return finite_difference_jacobian(model.output, x, model.output_dim)


def gain_jacobian(model, gain, y):
    """``dK/dy`` at output ``y``, shape ``(..., N, M)``."""
    y = np.asarray(y, dtype=float)
    if gain.jacobian is not None:
        return np.asarray(gain.jacobian(y), dtype=float)
    return finite_difference_jacobian(gain.gain, y, model.state_dim)


def plant_noise(seed, horizon, state_dim, amplitude):
    """Uniform ``[0, amplitude]`` noise, shape ``(horizon, N)``.

    Entry ``(t, i)`` depends only on ``(seed, t, i)``.
    """
    if amplitude == 0:
        return np.zeros((horizon, state_dim))
    return amplitude * seeding.uniforms(seed, horizon * state_dim).reshape(horizon, state_dim)


def trajectory(model, x0, horizon, noise_amplitude=0.0, seed=0):
    """Iterate ``x_{t+1} = f(x_t) + r_t`` for ``horizon`` steps.

    Raises :class:`DivergenceError` when a state becomes non-finite or its
    norm exceeds ``1e12``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if noise_amplitude < 0:
        raise ValueError("noise_amplitude must be >= 0")
    x = _as_state(model, x0).copy()
    states = np.empty((horizon + 1, model.state_dim))
    states[0] = x
    noise = plant_noise(seed, horizon, model.state_dim, noise_amplitude)
    f = model.map
    block = 1024
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, horizon, block):
            stop = min(start + block, horizon)
            if model.iterate is not None:
                states[start:stop + 1] = model.iterate(states[start], noise[start:stop])
            else:
                for t in range(start, stop):
                    x = f(x) + noise[t]
                    states[t + 1] = x
            bad = first_divergence(states[start + 1:stop + 1])
            if bad is not None:
                step_index = start + 1 + bad
                raise DivergenceError(
                    f"{model.name} trajectory diverged at step {step_index}", step_index)
    return Trajectory(states, float(noise_amplitude), int(seed))


def first_divergence(states):
    """Index of the first row that is non-finite or beyond ``1e12``, else None."""
    with np.errstate(invalid="ignore"):
        bad = ~(np.abs(states) <= DIVERGENCE_NORM).all(axis=-1)
    if bad.any():
        return int(np.argmax(bad))
    return None


# ---------------------------------------------------------------- built-ins

def henon(a=1.4, b=0.3):
    """Henon map observed through its first coordinate.

    The returned gain ``K(y) = (-a y^2, b y)`` cancels the nonlinearity:
    with every packet delivered, ``e_{t+1} = (e_2, 0)`` so the error is
    zero after two steps. Note ``f(0) = (1, 0)``; the origin is not a fixed
    point of this map.
    """

    def f(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([1.0 - a * x1 * x1 + x2, b * x1], axis=-1)

    def jac(x):
        x1 = x[..., 0]
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = -2.0 * a * x1
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = b
        return out

    def k(y):
        y1 = y[..., 0]
        return np.stack([-a * y1 * y1, b * y1], axis=-1)

    def dk(y):
        y1 = y[..., 0]
        out = np.zeros(y.shape[:-1] + (2, 1))
        out[..., 0, 0] = -2.0 * a * y1
        out[..., 1, 0] = b
        return out

    model = SystemModel(
        name="henon", state_dim=2, output_dim=1, map=f,
        output=lambda x: x[..., :1],
        map_jacobian=jac,
        output_jacobian=_selector(2, [0]),
        description=f"Henon map a={a}, b={b}, y = x1",
        iterate=lambda x0, noise: _henon_iterate(x0, noise, a, b))
    gain = ObserverGain(k, dk, f"deadbeat output injection K(y) = (-{a} y^2, {b} y)")
    return model, gain


def linear(A, C, K=None, name="linear"):
    """Linear model ``f(x) = A x``, ``h(x) = C x`` with constant gain ``K``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n, m = A.shape[0], C.shape[0]
    if A.shape != (n, n) or C.shape != (m, n):
        raise DimensionError(f"A must be square and C must be M x {n}")
    model = SystemModel(
        name=name, state_dim=n, output_dim=m,
        map=lambda x: x @ A.T,
        output=lambda x: x @ C.T,
        map_jacobian=lambda x: np.broadcast_to(A, x.shape[:-1] + (n, n)).copy(),
        output_jacobian=lambda x: np.broadcast_to(C, x.shape[:-1] + (m, n)).copy(),
        description=f"linear A={A.tolist()}, C={C.tolist()}")
    if K is None:
        return model, None
    K = np.atleast_2d(np.asarray(K, dtype=float)).reshape(n, m)
    gain = ObserverGain(
        lambda y: y @ K.T,
        lambda y: np.broadcast_to(K, y.shape[:-1] + (n, m)).copy(),
        f"constant gain K={K.tolist()}")
    return model, gain


def logistic(r=4.0):
    """Logistic map ``f(x) = r x (1 - x)`` with ``y = x``.

    The origin is already a fixed point, so the shift that would move a
    fixed point to zero is the identity here. The gain ``K(y) = f(y)``
    makes the error vanish after a single delivered packet.
    """

    def f(x):
        return r * x * (1.0 - x)

    def jac(x):
        return (r * (1.0 - 2.0 * x))[..., None]

    model = SystemModel(
        name="logistic", state_dim=1, output_dim=1, map=f,
        output=lambda x: x.copy(), map_jacobian=jac,
        output_jacobian=_selector(1, [0]),
        description=f"logistic map f(x) = {r} x (1 - x) on [0, 1]; shift 0 (f(0) = 0 already)",
        iterate=lambda x0, noise: _logistic_iterate(x0, noise, r))
    gain = ObserverGain(f, jac, f"deadbeat K(y) = {r} y (1 - y)")
    return model, gain


@numba.njit(cache=True)
def _henon_iterate(x0, noise, a, b):
    out = np.empty((noise.shape[0] + 1, 2))
    x1, x2 = x0[0], x0[1]
    out[0, 0], out[0, 1] = x1, x2
    for t in range(noise.shape[0]):
        x1, x2 = 1.0 - a * x1 * x1 + x2 + noise[t, 0], b * x1 + noise[t, 1]
        out[t + 1, 0], out[t + 1, 1] = x1, x2
    return out


@numba.njit(cache=True)
def _logistic_iterate(x0, noise, r):
    out = np.empty((noise.shape[0] + 1, 1))
    x = x0[0]
    out[0, 0] = x
    for t in range(noise.shape[0]):
        x = r * x * (1.0 - x) + noise[t, 0]
        out[t + 1, 0] = x
    return out


def _selector(n, rows):
    sel = np.zeros((len(rows), n))
    sel[np.arange(len(rows)), rows] = 1.0
    return lambda x: np.broadcast_to(sel, x.shape[:-1] + sel.shape).copy()


def _linear_scalar():
    return linear([[2.0]], [[1.0]], [[2.0]], name="linear-scalar")


def _linear_diagonal():
    # K = (-4, 9) places both eigenvalues of A - K C at zero.
    return linear(np.diag([2.0, 3.0]), [[1.0, 1.0]], [[-4.0], [9.0]], name="linear-diagonal")


BUILTINS = {
    "henon": henon,
    "linear-scalar": _linear_scalar,
    "linear-diagonal": _linear_diagonal,
    "logistic": logistic,
}


def builtin(name):
    """Return ``(model, gain)`` for one of :data:`BUILTINS`."""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; available: {', '.join(sorted(BUILTINS))}") from None
    return factory()


# ------------------------------------------------------ polynomial descriptor

@dataclass(frozen=True)
class _Polynomial:
    """Vector polynomial: one list of ``(coefficient, exponents)`` per output."""

    coefficients: list = field(default_factory=list)
    exponents: list = field(default_factory=list)
    in_dim: int = 0

    @classmethod
    def parse(cls, spec, in_dim, out_dim, what):
        if not isinstance(spec, list) or len(spec) != out_dim:
            raise ValueError(f"{what}: expected a list of {out_dim} coordinate polynomials")
        coefs, exps = [], []
        for i, terms in enumerate(spec):
            if not isinstance(terms, list):
                raise ValueError(f"{what}[{i}]: expected a list of terms")
            c = np.zeros(len(terms))
            e = np.zeros((len(terms), in_dim), dtype=int)
            for j, term in enumerate(terms):
                extra = set(term) - {"coefficient", "exponents"}
                if extra:
                    raise ValueError(f"{what}[{i}][{j}]: unknown field {sorted(extra)[0]!r}")
                try:
                    c[j] = float(term["coefficient"])
                    ej = [int(v) for v in term["exponents"]]
                except KeyError as exc:
                    raise ValueError(f"{what}[{i}][{j}]: missing field {exc.args[0]!r}") from None
                if len(ej) != in_dim or min(ej, default=0) < 0:
                    raise ValueError(
                        f"{what}[{i}][{j}].exponents: need {in_dim} non-negative integers")
                e[j] = ej
            coefs.append(c)
            exps.append(e)
        return cls(coefs, exps, in_dim)

    def __call__(self, x):
        out = [np.prod(x[..., None, :] ** e, axis=-1) @ c
               for c, e in zip(self.coefficients, self.exponents)]
        return np.stack(out, axis=-1)

    def jacobian(self, x):
        rows = []
        for c, e in zip(self.coefficients, self.exponents):
            cols = []
            for k in range(self.in_dim):
                de = e.copy()
                scale = c * de[:, k]
                de[:, k] = np.maximum(de[:, k] - 1, 0)
                cols.append(np.prod(x[..., None, :] ** de, axis=-1) @ scale)
            rows.append(np.stack(cols, axis=-1))
        return np.stack(rows, axis=-2)


DESCRIPTOR_FIELDS = {"name", "description", "state_dim", "output_dim", "map", "output", "gain"}


def from_descriptor(desc):
    """Build ``(model, gain)`` from a polynomial JSON descriptor (a dict).

    ``gain`` is optional and maps the output space back to the state space;
    when absent the returned gain is ``None``.
    """
    unknown = set(desc) - DESCRIPTOR_FIELDS
    if unknown:
        raise ValueError(f"unknown descriptor field {sorted(unknown)[0]!r}")
    for key in ("state_dim", "output_dim", "map", "output"):
        if key not in desc:
            raise ValueError(f"descriptor missing field {key!r}")
    n, m = int(desc["state_dim"]), int(desc["output_dim"])
    f = _Polynomial.parse(desc["map"], n, n, "map")
    h = _Polynomial.parse(desc["output"], n, m, "output")
    model = SystemModel(
        name=desc.get("name", "polynomial"), state_dim=n, output_dim=m,
        map=f, output=h, map_jacobian=f.jacobian, output_jacobian=h.jacobian,
        description=desc.get("description", "user polynomial map"))
    gain = None
    if desc.get("gain") is not None:
        k = _Polynomial.parse(desc["gain"], m, n, "gain")
        gain = ObserverGain(k, k.jacobian, "user polynomial gain")
    return model, gain


def load_descriptor(path):
    with open(path) as fh:
        return from_descriptor(json.load(fh))
