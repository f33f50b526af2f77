"""Command-line entry point.

Subcommands: ``lyapunov``, ``critical-p``, ``riccati-check``,
``observability``, ``simulate`` and ``sweep``. Parameters come from flags
and/or a JSON file given with ``--config``; flags win. Exit codes: 0 on
success, 2 on invalid input, 3 when the result itself is a numerical
divergence.
"""

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import dynsys, limits, lyapunov, observability, riccati, simulate
from .exceptions import DegenerateCocycleError, DivergenceError, NotConvergedError

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3
COMMANDS = ("lyapunov", "critical-p", "riccati-check", "observability", "simulate", "sweep")
STOCHASTIC = {"simulate", "sweep"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    command: str | None = None
    model: str | None = None
    model_file: str | None = None
    x0: list | None = None
    xhat0: list | None = None
    steps: int | None = None
    burn_in: int | None = None
    renorm_period: int | None = None
    p: float | None = None
    p_grid: list | None = None
    realizations: int | None = None
    noise: float | None = None
    seed: int | None = None
    mode: str | None = None
    epsilon: float | None = None
    samples: int | None = None
    tol: float | None = None
    outputs: int | None = None
    exponents: list | None = None
    moduli: list | None = None
    out: str | None = None

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(f"config: unknown field {key!r}")
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: malformed JSON ({exc.msg})") from None
        return cls.from_dict(data)

    def to_json(self):
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None},
                          sort_keys=True)

    def merged(self, overrides):
        data = asdict(self)
        data.update({k: v for k, v in asdict(overrides).items() if v is not None})
        return ExperimentConfig(**data)


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _parser():
    parser = argparse.ArgumentParser(
        prog="erasure-obs",
        description="Limits of nonlinear observation over an erasure channel.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with parameters (flags override)")
        p.add_argument("--model", help=f"built-in model: {', '.join(sorted(dynsys.BUILTINS))}")
        p.add_argument("--model-file", dest="model_file", help="JSON polynomial descriptor")
        p.add_argument("--x0", type=_floats, help="initial state, comma separated")
        p.add_argument("--out", help="output path (CSV or JSON)")
        p.add_argument("--steps", type=int)
        p.add_argument("--seed", type=int)

    p = sub.add_parser("lyapunov", help="Lyapunov spectrum by QR re-orthonormalization")
    common(p)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--renorm-period", dest="renorm_period", type=int)

    p = sub.add_parser("critical-p", help="critical non-erasure probability p* and q*")
    common(p)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--outputs", type=int, help="output dimension M (default: model's)")
    p.add_argument("--exponents", type=_floats, help="use these Lyapunov exponents")
    p.add_argument("--moduli", type=_floats, help="linear bound from eigenvalue moduli")

    p = sub.add_parser("riccati-check", help="Riccati-like necessary condition along an orbit")
    common(p)
    p.add_argument("--p", type=float)
    p.add_argument("--epsilon", type=float, help="R = epsilon * I")

    p = sub.add_parser("observability", help="rank condition and Gram bounds on the attractor")
    common(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("simulate", help="Monte Carlo observer error over the erasure channel")
    common(p)
    p.add_argument("--p", type=float)
    p.add_argument("--realizations", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--xhat0", type=_floats)
    p.add_argument("--burn-in", dest="burn_in", type=int)

    p = sub.add_parser("sweep", help="peak error statistic across a p grid")
    common(p)
    p.add_argument("--p-grid", dest="p_grid", type=_floats)
    p.add_argument("--realizations", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--mode", choices=("linearized", "full"))
    p.add_argument("--xhat0", type=_floats)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    return parser


def _config_from_args(argv):
    args = _parser().parse_args(argv)
    flags = {f.name: getattr(args, f.name, None) for f in fields(ExperimentConfig)}
    cfg = ExperimentConfig(**flags)
    if args.config:
        try:
            with open(args.config) as fh:
                base = ExperimentConfig.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config!r} ({exc.strerror})") from None
        if base.command is not None and base.command != args.command:
            raise ConfigError(f"config: field 'command' is {base.command!r}, "
                              f"but subcommand is {args.command!r}")
        cfg = base.merged(cfg)
    cfg.command = args.command
    return cfg


def _load_model(cfg):
    if cfg.model_file:
        try:
            return dynsys.load_descriptor(cfg.model_file)
        except OSError as exc:
            raise ConfigError(f"model_file: cannot read {cfg.model_file!r}") from exc
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"model_file: {exc}") from None
    try:
        return dynsys.builtin(cfg.model or "henon")
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


def _x0(cfg, model):
    default = [0.1] * model.state_dim if model.name == "henon" else [0.0] * model.state_dim
    if model.name == "logistic":
        default = [0.3]
    x0 = default if cfg.x0 is None else cfg.x0
    if len(x0) != model.state_dim:
        raise ConfigError(f"x0: expected {model.state_dim} values, got {len(x0)}")
    return np.array(x0, dtype=float)


def _positive(name, value, allow_zero=False):
    if value is None:
        return value
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigError(f"{name}: must be {'>= 0' if allow_zero else '> 0'}, got {value}")
    return value


def _probability(name, value):
    if value is None or not 0 < value < 1:
        raise ConfigError(f"{name}: must lie in (0, 1), got {value}")
    return value


def _write_json(path, payload):
    if path:
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")


def _cmd_lyapunov(cfg):
    model, _ = _load_model(cfg)
    steps = _positive("steps", cfg.steps if cfg.steps is not None else 1_000_000)
    burn = _positive("burn_in", cfg.burn_in if cfg.burn_in is not None else 1000, True)
    period = _positive("renorm_period", cfg.renorm_period or 1)
    if steps < 10 * burn:
        raise ConfigError(f"steps: must be >= 10 * burn_in = {10 * burn}")
    spec = lyapunov.spectrum(model, _x0(cfg, model), steps, burn, period)
    _write_json(cfg.out, {"model": model.name, "seed": cfg.seed, **spec.to_dict()})
    exps = " ".join(f"{v:.6f}" for v in spec.exponents)
    print(f"{model.name}: Lyapunov exponents {exps} "
          f"(residual {spec.convergence_residual:.2e}, "
          f"{'converged' if spec.converged else 'NOT converged'})")
    return EXIT_OK


def _cmd_critical_p(cfg):
    if cfg.moduli:
        m = _positive("outputs", cfg.outputs or 1)
        try:
            crit = limits.linear_critical_p(cfg.moduli, m)
        except ValueError as exc:
            raise ConfigError(f"moduli: {exc}") from None
        source = {"moduli": cfg.moduli}
    elif cfg.exponents:
        crit = limits.nonlinear_critical_p(cfg.exponents, _positive("outputs", cfg.outputs or 1))
        source = {"exponents": cfg.exponents}
    else:
        model, _ = _load_model(cfg)
        steps = _positive("steps", cfg.steps if cfg.steps is not None else 1_000_000)
        burn = _positive("burn_in", cfg.burn_in if cfg.burn_in is not None else 1000, True)
        if steps < 10 * burn:
            raise ConfigError(f"steps: must be >= 10 * burn_in = {10 * burn}")
        spec = lyapunov.spectrum(model, _x0(cfg, model), steps, burn)
        crit = limits.nonlinear_critical_p(spec, cfg.outputs or model.output_dim)
        source = {"model": model.name, "spectrum": spec.to_dict()}
    _write_json(cfg.out, {**source, **crit.to_dict()})
    note = f" [{crit.note}]" if crit.note else ""
    print(f"p* = {crit.critical_p:.4f}, q* = {crit.critical_q:.4f} (M = {crit.M}){note}")
    return EXIT_OK


def _cmd_riccati(cfg):
    model, _ = _load_model(cfg)
    p = _probability("p", cfg.p)
    steps = _positive("steps", cfg.steps if cfg.steps is not None else 100_000)
    eps = _positive("epsilon", cfg.epsilon if cfg.epsilon is not None else 1e-3, True)
    trace = riccati.condition_trace(model, _x0(cfg, model), steps, p, epsilon=eps)
    if cfg.out:
        trace.write_csv(cfg.out)
    if trace.flagged:
        print(f"Q0 left its bounds at step {trace.flag_step} "
              f"(eigenvalues seen in [{trace.min_eig_seen:.3g}, {trace.max_eig_seen:.3g}])")
        return EXIT_DIVERGED
    verdict = "satisfiable" if trace.satisfiable else "violated"
    print(f"running log-mean {trace.verdict_log_mean:.6f} after {trace.steps} steps: "
          f"necessary condition {verdict}")
    return EXIT_OK


def _cmd_observability(cfg):
    model, _ = _load_model(cfg)
    n = _positive("samples", cfg.samples if cfg.samples is not None else 10_000)
    burn = _positive("burn_in", cfg.burn_in if cfg.burn_in is not None else 1000, True)
    tol = _positive("tol", cfg.tol if cfg.tol is not None else observability.RANK_TOL)
    pts = dynsys.trajectory(model, _x0(cfg, model), burn + n).states[burn + 1:]
    scan = observability.bounds_scan(model, pts, tol)
    _write_json(cfg.out, {"model": model.name, "samples": n, **scan.to_dict()})
    print(f"rank condition {'holds' if scan.satisfied else 'FAILS'} on {n} samples; "
          f"alpha_theta = {scan.alpha_theta:.6g}, beta_theta = {scan.beta_theta:.6g}")
    return EXIT_OK


def _require_seed(cfg):
    if cfg.seed is None:
        raise ConfigError("seed: required for stochastic commands")
    return cfg.seed


def _gain(gain):
    if gain is None:
        raise ConfigError("model_file: descriptor has no 'gain'; simulation needs one")
    return gain


def _cmd_simulate(cfg):
    model, gain = _load_model(cfg)
    seed = _require_seed(cfg)
    p = _probability("p", cfg.p)
    steps = _positive("steps", cfg.steps if cfg.steps is not None else 10_000)
    R = _positive("realizations", cfg.realizations if cfg.realizations is not None else 50)
    noise = _positive("noise", cfg.noise if cfg.noise is not None else 1e-6, True)
    burn = _positive("burn_in", cfg.burn_in or 0, True)
    x0 = _x0(cfg, model)
    xhat0 = x0 if cfg.xhat0 is None else np.array(cfg.xhat0, dtype=float)
    if xhat0.shape != x0.shape:
        raise ConfigError(f"xhat0: expected {model.state_dim} values")
    rep = simulate.monte_carlo(model, _gain(gain), x0, xhat0, p, steps, R, noise, seed, burn)
    if cfg.out:
        rep.write_csv(cfg.out)
    print(f"p = {p}: peak mean-square error {rep.peak_mean_sq_error:.6g} over {R} realizations"
          + (f"; {rep.diverged_runs} diverged" if rep.diverged else ""))
    return EXIT_DIVERGED if rep.diverged else EXIT_OK


def _cmd_sweep(cfg):
    model, gain = _load_model(cfg)
    seed = _require_seed(cfg)
    grid = cfg.p_grid or [0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.8, 0.9]
    for v in grid:
        _probability("p_grid", v)
    steps = _positive("steps", cfg.steps if cfg.steps is not None else 10_000)
    R = _positive("realizations", cfg.realizations if cfg.realizations is not None else 50)
    noise = _positive("noise", cfg.noise if cfg.noise is not None else 1e-6, True)
    burn = _positive("burn_in", cfg.burn_in or 0, True)
    mode = cfg.mode or "linearized"
    if mode not in ("linearized", "full"):
        raise ConfigError(f"mode: must be 'linearized' or 'full', got {mode!r}")
    x0 = _x0(cfg, model)
    xhat0 = None if cfg.xhat0 is None else np.array(cfg.xhat0, dtype=float)
    res = simulate.sweep_p(model, _gain(gain), x0, grid, steps, R, mode, seed, noise,
                           xhat0=xhat0, burn_in=burn)
    if cfg.out:
        res.write_csv(cfg.out)
    flagged = [pt.p for pt in res.points if pt.diverged]
    crit = "n/a" if res.critical_p is None else f"{res.critical_p:.4f}"
    print(f"{mode} sweep over {len(res.points)} points, p* = {crit}; "
          f"diverged at {flagged if flagged else 'none'}")
    return EXIT_DIVERGED if len(flagged) == len(res.points) else EXIT_OK


HANDLERS = {
    "lyapunov": _cmd_lyapunov,
    "critical-p": _cmd_critical_p,
    "riccati-check": _cmd_riccati,
    "observability": _cmd_observability,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
}


def run(argv):
    """Execute one subcommand; returns the process exit code."""
    try:
        cfg = _config_from_args(argv)
        return HANDLERS[cfg.command](cfg)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    except (ConfigError, NotConvergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TypeError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DivergenceError, DegenerateCocycleError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run(sys.argv[1:]))
