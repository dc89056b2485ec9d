"""Test processes and the stochastic variational inequality residual.

An SVI solution ``X`` must satisfy, for every admissible test process
``dZ = G dt + B(Z) dW`` and some ``C > 0``,

    E||X_t - Z_t||^2 + 2 E int_0^t varphi(X)
        <= E||x0 - Z_0||^2 + 2 E int_0^t varphi(Z)
           - 2 E int_0^t (G, X - Z) + C E int_0^t ||X - Z||^2,

all norms and pairings in H^-1. Checking a finite family of ``Z`` only tests a
necessary condition.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import Ensemble, _applied_eta, fit_rate, mc_mean
from .grid import h_minus1_inner, h_minus1_norm, l2_inner, l2_norm, varphi_energy
from .noise import apply_B
from .report import CertificateReport, CheckResult, _jsonable
from .scalar import YosidaRegularization, potential_gap_bound
from .solver import SolverConfig, _resolve_path, drift, laplacian, simulate

SVI_DT_FACTOR = 10.0


# -- drift specifications -------------------------------------------------------------

@dataclass(frozen=True)
class ZeroDrift:
    def __call__(self, t, Z):
        return np.zeros_like(Z)


@dataclass(frozen=True, eq=False)
class ConstantDrift:
    c: np.ndarray

    def __call__(self, t, Z):
        return np.broadcast_to(np.asarray(self.c, dtype=float), np.shape(Z)).copy()


@dataclass(frozen=True)
class RegularizedDrift:
    """``G = eps*Lap Z + Lap phi_reg(Z)`` for the configuration ``cfg``; ``Z`` is that solver's output."""

    cfg: SolverConfig


@dataclass(frozen=True, eq=False)
class CallbackDrift:
    """Any adapted drift ``fn(t, Z) -> G`` (must not look ahead along the path)."""

    fn: object

    def __call__(self, t, Z):
        return np.asarray(self.fn(t, Z), dtype=float)


@dataclass(eq=False)
class TestProcess:
    spec: object
    z0: np.ndarray
    times: np.ndarray
    states: np.ndarray
    G: np.ndarray
    path_seed: int
    config: SolverConfig
    dW: np.ndarray = field(repr=False)
    trajectory: object = None

    __test__ = False  # not a pytest class

    def identity_defects(self):
        """L2_h norms of ``Z_{n+1} - Z_n - dt*G_n - B(Z_n) dW_n``."""
        L = laplacian(self.config.domain)
        dt = self.config.dt
        noise = self.config.noise
        return np.array([
            l2_norm(L, self.states[i + 1] - self.states[i] - dt * self.G[i]
                    - apply_B(noise, self.times[i], self.states[i], self.dW[i]))
            for i in range(len(self.times) - 1)])


def make_test_process(spec, z0, path, cfg):
    """Simulate ``Z`` with drift ``spec`` on ``cfg``'s grid and noise, driven by ``path``.

    Zero, constant and callback drifts are integrated by Euler-Maruyama;
    ``RegularizedDrift`` runs the solver with ``spec.cfg`` (noise taken from ``cfg``).
    """
    if cfg.record_every != 1:
        raise ValueError("test processes record every step")
    L = laplacian(cfg.domain)
    z0 = np.array(L.values(z0), dtype=float)
    if isinstance(spec, RegularizedDrift):
        zcfg = spec.cfg.with_(noise=cfg.noise, record_every=1)
        if zcfg.dt != cfg.dt or zcfg.T != cfg.T or zcfg.domain != cfg.domain:
            raise ValueError("test-process configuration must share dt, T and domain")
        tr = simulate(zcfg, z0, path)
        return TestProcess(spec, z0, tr.times, tr.states, _applied_eta(tr),
                           tr.path_seed, zcfg, tr.dW, tr)
    p = _resolve_path(cfg, path)
    dW = p.increments[: cfg.n_steps]
    n_steps = cfg.n_steps
    states = np.empty((n_steps + 1, cfg.domain.n))
    G = np.empty((n_steps, cfg.domain.n))
    states[0] = z0
    Z = z0
    for i in range(n_steps):
        t = i * cfg.dt
        G[i] = spec(t, Z)
        Z = Z + cfg.dt * G[i] + apply_B(cfg.noise, t, Z, dW[i])
        states[i + 1] = Z
    times = cfg.dt * np.arange(n_steps + 1)
    return TestProcess(spec, z0, times, states, G, p.seed, cfg, dW)


def make_test_ensemble(spec, z0, paths, cfg):
    return [make_test_process(spec, z0, p, cfg) for p in paths]


# -- residual ---------------------------------------------------------------------------

@dataclass
class SviReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margins: np.ndarray
    C: float
    halfwidths: np.ndarray
    tolerance: np.ndarray
    passed: bool
    min_C: float
    a: float
    b_std: np.ndarray
    M: int
    dt: float
    min_C_within_tolerance: float = 0.0

    def to_dict(self):
        return _jsonable({
            "times": self.times, "lhs": self.lhs, "rhs": self.rhs, "margins": self.margins,
            "C": self.C, "halfwidths": self.halfwidths, "tolerance": self.tolerance,
            "passed": self.passed, "min_C": self.min_C,
            "min_C_within_tolerance": self.min_C_within_tolerance, "a": self.a, "M": self.M, "dt": self.dt,
            "worst_margin_over_tolerance": float(np.min(self.margins + self.tolerance)),
        })

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "lhs", "rhs", "margin", "halfwidth", "tolerance"])
            for row in zip(self.times, self.lhs, self.rhs, self.margins, self.halfwidths, self.tolerance):
                w.writerow([repr(float(v)) for v in row])


def _cumulative_left(values, dt):
    return np.concatenate(([0.0], np.cumsum(values[:-1]) * dt))


def svi_residual(X_ens, Z_ens, C, m=None, a=None):
    """Evaluate both sides of the inequality along the time grid.

    Time integrals use the left endpoint; ``G`` in step ``i`` is the drift
    that advanced ``Z`` over that step. A time passes when
    ``margin >= -(a*dt + 2*std/sqrt(M))`` with ``a = SVI_DT_FACTOR*(1 + E||x0||^2_{L2})``
    unless ``a`` is given; ``std`` is the sample deviation of the per-path margins.
    """
    if isinstance(X_ens, Ensemble):
        X_list = X_ens.trajectories
    else:
        X_list = list(X_ens)
    Z_list = list(Z_ens)
    if len(X_list) != len(Z_list) or not X_list:
        raise ValueError("X and Z ensembles must have the same positive size")
    cfg = X_list[0].config
    m = cfg.m if m is None else m
    if cfg.record_every != 1:
        raise ValueError("the residual needs every step recorded")
    L = laplacian(cfg.domain)
    dt = cfg.dt
    per_base, per_C, x0_sq = [], [], []
    for X, Z in zip(X_list, Z_list):
        if X.path_seed != Z.path_seed:
            raise ValueError("X and Z are not driven by the same path")
        if not np.array_equal(X.times, Z.times):
            raise ValueError("X and Z do not share a time grid")
        if X.dW.shape != Z.dW.shape or not np.array_equal(X.dW, Z.dW):
            raise ValueError("X and Z increments differ")
        D = X.states - Z.states
        dist = np.array([h_minus1_norm(L, d) ** 2 for d in D])
        phiX = np.array([varphi_energy(L, m, x) for x in X.states])
        phiZ = np.array([varphi_energy(L, m, z) for z in Z.states])
        pair = np.array([h_minus1_inner(L, g, d) for g, d in zip(Z.G, D[:-1])] + [0.0])
        lhs = dist + 2.0 * _cumulative_left(phiX, dt)
        base = dist[0] + 2.0 * _cumulative_left(phiZ, dt) - 2.0 * _cumulative_left(pair, dt) - lhs
        per_base.append(np.stack([lhs, base]))
        per_C.append(_cumulative_left(dist, dt))
        x0_sq.append(l2_norm(L, X.states[0]) ** 2)
    per_base = np.array(per_base)
    per_C = np.array(per_C)
    lhs_p = per_base[:, 0]
    base_p = per_base[:, 1]
    margins_p = base_p + C * per_C
    M = len(X_list)
    lhs, _ = mc_mean(lhs_p)
    margins, hw = mc_mean(margins_p)
    rhs = lhs + margins
    std = margins_p.std(axis=0, ddof=1) if M > 1 else np.zeros_like(margins)
    a = SVI_DT_FACTOR * (1.0 + float(np.mean(x0_sq))) if a is None else float(a)
    tol = a * dt + 2.0 * std / np.sqrt(M)
    base_mean = base_p.mean(axis=0)
    c_mean = per_C.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(c_mean > 0, -base_mean / c_mean, np.where(base_mean < 0, np.inf, 0.0))
        need_tol = np.where(c_mean > 0, -(base_mean + tol) / c_mean,
                            np.where(base_mean + tol < 0, np.inf, 0.0))
    min_C = float(max(0.0, np.max(need)))
    min_C_tol = float(max(0.0, np.max(need_tol)))
    return SviReport(X_list[0].times, lhs, rhs, margins, float(C), hw, tol,
                     bool(np.all(margins >= -tol)), min_C, a, std, M, dt, min_C_tol)


# -- selection inequality -------------------------------------------------------------

def selection_slack(cfg, X):
    """Per-state slack ``gap(reg) + (eps_visc/2) max(0, ||Z||^2 - ||X||^2)`` without the ``Z`` part.

    Returns the regularization part only: Yosida ``eps*(|O| + (m+1) varphi(X))``,
    Delta ``(2/(m+1)) delta^((m+1)/2) |O|``, zero when unregularized.
    """
    L = laplacian(cfg.domain)
    c0, c1 = potential_gap_bound(cfg.m, cfg.regularization)
    return np.array([c0 * cfg.domain.length + c1 * varphi_energy(L, cfg.m, x) for x in X])


def selection_inequality_check(X, Z, m=None, cfg=None, eta=None, tol=1e-9):
    """Check ``(eta_r, X_r - Z_r)_{H^-1} <= varphi(Z_r) - varphi(X_r) + slack`` per step.

    ``X`` is a trajectory with ``eta`` (or states with ``eta`` and ``cfg``);
    ``Z`` is a trajectory, test process or state array on the same grid.
    """
    if cfg is None:
        cfg = X.config
    Xs = X.states if hasattr(X, "states") else np.asarray(X, dtype=float)
    if eta is None:
        eta = getattr(X, "eta", None)
    if eta is None:
        raise ValueError("X carries no eta selections")
    Zs = Z.states if hasattr(Z, "states") else np.asarray(Z, dtype=float)
    if Zs.shape != Xs.shape or eta.shape != Xs.shape:
        raise ValueError("X, Z and eta must have the same shape")
    m = cfg.m if m is None else m
    L = laplacian(cfg.domain)
    D = Xs - Zs
    lhs = np.array([h_minus1_inner(L, e, d) for e, d in zip(eta, D)])
    phiX = np.array([varphi_energy(L, m, x) for x in Xs])
    phiZ = np.array([varphi_energy(L, m, z) for z in Zs])
    slack = selection_slack(cfg, Xs)
    if cfg.eps_visc:
        nz = np.array([l2_inner(L, z, z) for z in Zs])
        nx = np.array([l2_inner(L, x, x) for x in Xs])
        slack = slack + 0.5 * cfg.eps_visc * np.maximum(0.0, nz - nx)
    margins = phiZ - phiX + slack - lhs
    i = int(np.argmin(margins))
    report = CertificateReport(context={"m": m, "steps": len(Xs),
                                        "max_slack": float(np.max(slack))})
    report.add(CheckResult("selection_inequality", bool(np.all(margins >= -tol)),
                           float(margins[i]), {"step": i, "slack": float(slack[i])}, len(margins)))
    excess = np.maximum(lhs - (phiZ - phiX), 0.0)
    report.context["max_excess"] = float(np.max(excess))
    report.slack = slack
    report.excess = excess
    return report


def selection_slack_ladder(X_states, Z_states, cfg, eps_values, tol=1e-9):
    """Frozen ``X``, ``Z``; Yosida selections rebuilt for every ``eps``.

    Returns per-level reports and a rate fit of the largest slack against ``eps``.
    """
    reports, slacks = [], []
    for eps in eps_values:
        c = cfg.with_(regularization=YosidaRegularization(float(eps)))
        eta = drift(c, X_states)
        r = selection_inequality_check(X_states, Z_states, cfg=c, eta=eta, tol=tol)
        reports.append(r)
        slacks.append(r.context["max_slack"])
    return reports, fit_rate(eps_values, slacks)


__all__ = [
    "ZeroDrift", "ConstantDrift", "RegularizedDrift", "CallbackDrift", "TestProcess",
    "make_test_process", "make_test_ensemble", "SviReport", "svi_residual",
    "selection_inequality_check", "selection_slack", "selection_slack_ladder",
]
