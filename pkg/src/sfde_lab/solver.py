"""Time stepping for the regularized equation

    dX = eps*Lap X dt + Lap phi_reg(X) dt + B(t, X) dW

on the Dirichlet grid. The noise is always taken explicitly at the left
endpoint (Euler-Maruyama). Two treatments of the drift are offered: ``imex``
(viscosity implicit, nonlinearity explicit, CFL-limited) and ``implicit``
(backward Euler solved by damped Newton, unconditionally stable).
"""

import csv
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import kernels
from .grid import DirichletLaplacian, Domain1D, apply_laplacian, h_minus1_norm, l2_norm
from .noise import apply_B, n_modes, path_for, sample_path
from .scalar import (
    DeltaSmoothing,
    YosidaRegularization,
    lipschitz_constant,
    phi_reg,
    psi_reg,
    reg_kind,
)

SCHEMES = ("implicit", "imex")


class CFLViolation(ValueError):
    def __init__(self, dt, required_dt):
        super().__init__(f"dt={dt:g} violates the explicit stability bound dt <= {required_dt:g}")
        self.dt = dt
        self.required_dt = required_dt


class NewtonDivergence(RuntimeError):
    def __init__(self, residual, iterations):
        super().__init__(f"Newton failed after {iterations} iterations, residual {residual:.3e}")
        self.residual = residual
        self.iterations = iterations


class SimulationError(RuntimeError):
    def __init__(self, step, cause):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class SolverConfig:
    m: float
    dt: float
    T: float
    domain: Domain1D
    eps_visc: float = 0.0
    regularization: object = None
    scheme: str = "implicit"
    noise: object = field(default=None, compare=False)
    newton_tol: float = 1e-10
    newton_max_iter: int = 500
    record_every: int = 1

    def __post_init__(self):
        if not (0.0 <= self.m <= 1.0):
            raise ValueError("m must lie in [0, 1]")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T >= self.dt * (1 - 1e-12):
            raise ValueError("need T >= dt")
        if self.eps_visc < 0:
            raise ValueError("eps_visc must be nonnegative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.regularization is not None and not isinstance(
                self.regularization, (YosidaRegularization, DeltaSmoothing)):
            raise TypeError("regularization must be YosidaRegularization, DeltaSmoothing or None")
        reg_kind(self.m, self.regularization)
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-8 * steps:
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.record_every < 1 or self.n_steps % self.record_every:
            raise ValueError("record_every must divide the number of steps")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @property
    def K(self):
        return n_modes(self.noise)

    def with_(self, **changes):
        return replace(self, **changes)

    def describe(self):
        reg = self.regularization
        if isinstance(reg, YosidaRegularization):
            reg_d = {"type": "yosida", "eps_y": reg.eps_y}
        elif isinstance(reg, DeltaSmoothing):
            reg_d = {"type": "delta", "delta": reg.delta}
        else:
            reg_d = None
        return {
            "m": self.m, "dt": self.dt, "T": self.T, "n": self.domain.n,
            "a": self.domain.a, "b": self.domain.b, "eps_visc": self.eps_visc,
            "regularization": reg_d, "scheme": self.scheme,
            "noise": None if self.noise is None else self.noise.describe(),
            "newton_tol": self.newton_tol, "newton_max_iter": self.newton_max_iter,
            "record_every": self.record_every,
        }


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    eta: np.ndarray
    config: SolverConfig
    path_seed: int
    dW: np.ndarray = field(repr=False)
    max_residual: float = 0.0
    newton_iterations: int = 0

    @property
    def n_records(self):
        return len(self.times)

    def increment(self, i):
        """Noise increment ``B(X_i) dW_i`` of step ``i`` (requires ``record_every == 1``)."""
        return apply_B(self.config.noise, self.times[i], self.states[i], self.dW[i])

    def to_csv(self, path):
        """Long-format ``(t, x, value)`` rows, boundary nodes excluded."""
        x = self.config.domain.x
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "value"])
            for t, row in zip(self.times, self.states):
                for xj, v in zip(x, row):
                    w.writerow([repr(float(t)), repr(float(xj)), repr(float(v))])

    def summary(self):
        """Norms per recorded time, for a JSON summary."""
        L = laplacian(self.config.domain)
        return {
            "times": self.times.tolist(),
            "h_minus1_norm": [h_minus1_norm(L, x) for x in self.states],
            "l2_norm": [l2_norm(L, x) for x in self.states],
            "energy": [lyapunov_energy(self.config, x) for x in self.states],
            "path_seed": self.path_seed,
            "max_newton_residual": self.max_residual,
            "newton_iterations": self.newton_iterations,
        }

    def identity_defects(self):
        """L2_h norms of ``X_{i+1} - X_i - dt*eta_{i+1} - B(X_i) dW_i`` for every step."""
        if self.config.record_every != 1:
            raise ValueError("identity check needs every step recorded")
        L = laplacian(self.config.domain)
        dt = self.config.dt
        return np.array([
            l2_norm(L, self.states[i + 1] - self.states[i] - dt * self.eta[i + 1] - self.increment(i))
            for i in range(len(self.times) - 1)
        ])


@lru_cache(maxsize=32)
def laplacian(domain):
    return DirichletLaplacian(domain)


def drift(cfg, X):
    """``eps*Lap X + Lap phi_reg(X)``, the selection recorded as ``eta``."""
    L = laplacian(cfg.domain)
    X = np.asarray(X, dtype=float)
    return apply_laplacian(L, cfg.eps_visc * X + np.asarray(phi_reg(cfg.m, cfg.regularization, X)))


def lyapunov_energy(cfg, X):
    """``eps/2 ||X||^2 + sum_j h psi_reg(X_j)``, the regularized energy."""
    X = np.asarray(X, dtype=float)
    h = cfg.domain.h
    return float(0.5 * cfg.eps_visc * h * np.dot(X, X)
                 + h * np.sum(psi_reg(cfg.m, cfg.regularization, X)))


def cfl_limit(cfg):
    h = cfg.domain.h
    return h * h / (2.0 * lipschitz_constant(cfg.m, cfg.regularization))


def step_imex(cfg, X, t, dW):
    """One IMEX step; rejects ``dt`` above ``h^2 / (2 Lip(phi_reg))``."""
    limit = cfl_limit(cfg)
    if cfg.dt > limit * (1 + 1e-12):
        raise CFLViolation(cfg.dt, limit)
    L = laplacian(cfg.domain)
    X = np.asarray(X, dtype=float)
    phi = np.asarray(phi_reg(cfg.m, cfg.regularization, X))
    rhs = X + cfg.dt * apply_laplacian(L, phi) + apply_B(cfg.noise, t, X, dW)
    if cfg.eps_visc == 0.0:
        return rhs
    n = cfg.domain.n
    c = cfg.dt * cfg.eps_visc / (cfg.domain.h ** 2)
    off = np.full(n, -c)
    return kernels.thomas_solve(off, np.full(n, 1.0 + 2.0 * c), off, rhs)


def _implicit(cfg, b, kind, param):
    u, res, its, ok = kernels.implicit_solve(
        b, b, cfg.domain.h, cfg.dt, cfg.eps_visc, kind, float(cfg.m), param,
        cfg.newton_tol, cfg.newton_max_iter)
    if not ok:
        raise NewtonDivergence(res, its)
    return u, res, its


def step_implicit(cfg, X, t, dW):
    """One backward-Euler step ``X' - dt*(eps Lap X' + Lap phi_reg(X')) = X + B(X) dW``."""
    kind, param = reg_kind(cfg.m, cfg.regularization)
    X = np.asarray(X, dtype=float)
    b = X + apply_B(cfg.noise, t, X, dW)
    return _implicit(cfg, b, kind, param)[0]


def _resolve_path(cfg, path):
    if path is None:
        if cfg.K:
            raise ValueError("a Wiener path is required for a noisy configuration")
        path = sample_path(0, cfg.dt, cfg.n_steps, 0)
    if path.K != cfg.K:
        raise ValueError(f"path has {path.K} modes, noise model expects {cfg.K}")
    p = path_for(path, cfg.dt)
    if p.n_steps < cfg.n_steps:
        raise ValueError(f"path covers {p.n_steps} steps of dt={cfg.dt}, need {cfg.n_steps}")
    return p


def simulate(cfg, x0, path=None):
    """March ``x0`` from 0 to ``T`` driven by ``path`` (coarsened to ``cfg.dt``)."""
    p = _resolve_path(cfg, path)
    dW = p.increments[: cfg.n_steps]
    L = laplacian(cfg.domain)
    X = np.array(L.values(x0), dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("initial datum must be finite")
    kind, param = reg_kind(cfg.m, cfg.regularization)
    n_rec = cfg.n_steps // cfg.record_every + 1
    states = np.empty((n_rec, cfg.domain.n))
    states[0] = X
    times = cfg.dt * cfg.record_every * np.arange(n_rec)
    max_res = 0.0
    total_its = 0
    noise = cfg.noise
    implicit = cfg.scheme == "implicit"
    for i in range(cfg.n_steps):
        t = i * cfg.dt
        try:
            if implicit:
                b = X + apply_B(noise, t, X, dW[i])
                X, res, its = _implicit(cfg, b, kind, param)
                max_res = max(max_res, res)
                total_its += its
            else:
                X = step_imex(cfg, X, t, dW[i])
        except (NewtonDivergence, CFLViolation, FloatingPointError) as exc:
            raise SimulationError(i, exc) from exc
        if not np.all(np.isfinite(X)):
            raise SimulationError(i, "non-finite state")
        if (i + 1) % cfg.record_every == 0:
            states[(i + 1) // cfg.record_every] = X
    eta = drift(cfg, states)
    return Trajectory(times, states, eta, cfg, p.seed, dW, max_res, total_its)


_COUPLING_FREE = ("eps_visc", "regularization", "dt", "record_every")


def check_coupled(cfgs):
    if not cfgs:
        raise ValueError("need at least one configuration")
    ref = cfgs[0]
    for c in cfgs[1:]:
        for name in ("m", "T", "domain", "scheme", "newton_tol", "newton_max_iter"):
            if getattr(c, name) != getattr(ref, name):
                raise ValueError(f"coupled configurations differ in {name!r}")
        if c.noise is not ref.noise and c.K != ref.K:
            raise ValueError("coupled configurations must share the noise model")


def simulate_coupled(cfgs, x0, path=None):
    """Run every configuration on the identical Brownian path."""
    check_coupled(cfgs)
    return [simulate(c, x0, path) for c in cfgs]
