"""Ensemble statistics: energy bounds, coupled stability rates, contraction, extinction.

Expectations are Monte-Carlo means over independent paths. Every reduction
stacks per-path values in path order and reduces with numpy's fixed pairwise
summation, so results are bitwise reproducible for a given seed set.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .grid import h_minus1_norm, l2_norm
from .noise import path_seed, sample_path
from .scalar import DeltaSmoothing, YosidaRegularization
from .solver import laplacian, lyapunov_energy, simulate, simulate_coupled


class DegenerateFit(ValueError):
    pass


@dataclass
class Ensemble:
    trajectories: list
    config: object = None

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("empty ensemble")
        if self.config is None:
            self.config = self.trajectories[0].config
        t0 = self.trajectories[0].times
        for tr in self.trajectories[1:]:
            if not np.array_equal(tr.times, t0):
                raise ValueError("trajectories do not share a time grid")
            if tr.config != self.config:
                raise ValueError("trajectories do not share a configuration")

    @property
    def M(self):
        return len(self.trajectories)

    @property
    def times(self):
        return self.trajectories[0].times

    @property
    def seeds(self):
        return [tr.path_seed for tr in self.trajectories]


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def ensemble_seeds(base_seed, M):
    return [path_seed(base_seed, i) for i in range(M)]


def make_path(cfg, seed, dt_fine=None):
    dt_fine = cfg.dt if dt_fine is None else dt_fine
    n = int(round(cfg.T / dt_fine))
    return sample_path(seed, dt_fine, n, cfg.K)


def run_ensemble(cfg, x0, seeds, threads=1, dt_fine=None):
    """Simulate ``cfg`` from ``x0`` once per seed; results in seed order."""
    return Ensemble(_map(lambda s: simulate(cfg, x0, make_path(cfg, s, dt_fine)), seeds, threads), cfg)


def mc_mean(values):
    """Mean over paths (axis 0) and the half-width ``2*std/sqrt(M)``."""
    v = np.asarray(values, dtype=float)
    M = v.shape[0]
    mean = v.mean(axis=0)
    hw = 2.0 * v.std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.zeros_like(mean)
    return mean, hw


def _applied_eta(tr):
    """Selections paired with each step: ``eta_{i+1}`` for backward Euler, ``eta_i`` for IMEX."""
    if tr.config.scheme == "implicit":
        return tr.eta[1:]
    return tr.eta[:-1]


def energy_paths(tr, cfg=None):
    """Per-trajectory ``(energy_t, ||eta_step||^2_{H^-1})`` arrays."""
    cfg = tr.config if cfg is None else cfg
    L = laplacian(cfg.domain)
    E = np.array([lyapunov_energy(cfg, x) for x in tr.states])
    eta_sq = np.array([h_minus1_norm(L, e) ** 2 for e in _applied_eta(tr)])
    return E, eta_sq


def energy_statistics(ens, m=None, eps_visc=None, reg=None):
    """Monte-Carlo energy statistics along the time grid.

    ``a(t) = E int_0^t energy(X_r) dr`` (left endpoint),
    ``b(t) = E t*energy(X_t) + E int_0^t r ||eta_r||^2 dr``,
    ``c(t) = E energy(X_t) + E int_0^t ||eta_r||^2 dr``,
    with ``energy = eps/2 ||.||^2 + int psi_reg`` and the ``eta`` integrals
    using the selection that drove each step. Comparators are
    ``E||x0||^2_{H^-1} + 1`` and ``E energy(x0)``.
    """
    cfg = ens.config
    changes = {}
    if m is not None:
        changes["m"] = m
    if eps_visc is not None:
        changes["eps_visc"] = eps_visc
    if reg is not None:
        changes["regularization"] = reg
    if changes:
        cfg = cfg.with_(**changes)
    L = laplacian(cfg.domain)
    t = ens.times
    dts = np.diff(t)
    a_p, b_p, c_p, x0_h, e0 = [], [], [], [], []
    for tr in ens.trajectories:
        if tr.eta is None:
            raise ValueError("trajectory carries no eta selections")
        E, eta_sq = energy_paths(tr, cfg)
        t_step = t[1:] if tr.config.scheme == "implicit" else t[:-1]
        a_p.append(np.concatenate(([0.0], np.cumsum(E[:-1] * dts))))
        b_p.append(t * E + np.concatenate(([0.0], np.cumsum(t_step * eta_sq * dts))))
        c_p.append(E + np.concatenate(([0.0], np.cumsum(eta_sq * dts))))
        x0_h.append(h_minus1_norm(L, tr.states[0]) ** 2)
        e0.append(E[0])
    a, a_hw = mc_mean(a_p)
    b, b_hw = mc_mean(b_p)
    c, c_hw = mc_mean(c_p)
    return {
        "times": t,
        "a": a, "b": b, "c": c,
        "a_halfwidth": a_hw, "b_halfwidth": b_hw, "c_halfwidth": c_hw,
        "per_path": {"a": np.array(a_p), "b": np.array(b_p), "c": np.array(c_p)},
        "comparator_h_minus1": float(np.mean(x0_h) + 1.0),
        "comparator_energy": float(np.mean(e0)),
    }


def l2_sup_statistic(ens):
    """``E sup_t ||X_t||^2_{L2}`` against ``E||x0||^2_{L2} + 1``."""
    L = laplacian(ens.config.domain)
    sups = [max(l2_norm(L, x) ** 2 for x in tr.states) for tr in ens.trajectories]
    x0 = [l2_norm(L, tr.states[0]) ** 2 for tr in ens.trajectories]
    return float(np.mean(sups)), float(np.mean(x0) + 1.0)


# -- rates -----------------------------------------------------------------------

@dataclass
class RateFit:
    levels: list
    slope: float
    intercept: float
    r2: float
    halfwidths: list = field(default_factory=list)
    per_path: object = None

    def to_dict(self):
        return {
            "levels": [[float(p), float(e)] for p, e in self.levels],
            "slope": self.slope, "intercept": self.intercept, "r2": self.r2,
            "halfwidths": [float(x) for x in self.halfwidths],
        }


def fit_rate(params, errors, halfwidths=()):
    """Least-squares slope of ``log error`` against ``log param``."""
    params = np.asarray(params, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if params.size < 3:
        raise ValueError("a rate fit needs at least 3 levels")
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise DegenerateFit("degenerate: errors must be positive and finite")
    x = np.log(params)
    y = np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(list(zip(params.tolist(), errors.tolist())), float(slope),
                   float(intercept), float(r2), list(halfwidths))


def _common_indices(times_list):
    keys = [np.round(np.asarray(t) * 1e9).astype(np.int64) for t in times_list]
    common = keys[0]
    for k in keys[1:]:
        common = np.intersect1d(common, k)
    return [np.searchsorted(k, common) for k in keys]


def coupled_sup_errors(trajs):
    """``sup_t ||X^i_t - X^{i+1}_t||^2_{H^-1}`` for consecutive members of one coupled ladder."""
    L = laplacian(trajs[0].config.domain)
    out = []
    for A, B in zip(trajs[:-1], trajs[1:]):
        ia, ib = _common_indices([A.times, B.times])
        diff = A.states[ia] - B.states[ib]
        out.append(max(h_minus1_norm(L, d) ** 2 for d in diff))
    return np.array(out)


def stability_rate(ladders, params):
    """Fit the coupled-difference rate over a ladder.

    ``ladders[p]`` holds the trajectories of path ``p`` for the simulated
    parameter values ``params`` (each the next one's double); level ``i`` is
    ``params[i]`` with error ``sqrt(E sup_t ||X^{params[i]} - X^{params[i+1]}||^2)``.
    """
    per_path = np.array([coupled_sup_errors(tr) for tr in ladders])
    return rate_from_sup_errors(per_path, params)


def rate_from_sup_errors(per_path, params):
    per_path = np.asarray(per_path, dtype=float)
    mean, hw = mc_mean(per_path)
    fit = fit_rate(np.asarray(params[:-1], dtype=float), np.sqrt(mean), np.sqrt(hw))
    fit.per_path = per_path
    return fit


def ladder_configs(base_cfg, axis, values):
    """Configurations along a regularization ladder.

    ``axis`` is ``"delta"``, ``"eps_y"`` (Yosida parameter only),
    ``"eps_visc"``, ``"eps"`` (Yosida parameter and viscosity set together)
    or ``"dt"`` (time step, all levels driven by one path at the finest step).
    """
    out = []
    for v in values:
        if axis == "delta":
            out.append(base_cfg.with_(regularization=DeltaSmoothing(v)))
        elif axis == "eps_y":
            out.append(base_cfg.with_(regularization=YosidaRegularization(v)))
        elif axis == "eps_visc":
            out.append(base_cfg.with_(eps_visc=v))
        elif axis == "dt":
            out.append(base_cfg.with_(dt=v, record_every=1))
        elif axis == "eps":
            out.append(base_cfg.with_(regularization=YosidaRegularization(v), eps_visc=v))
        else:
            raise ValueError(f"unknown ladder axis {axis!r}")
    return out


def ladder_with_partner(values):
    """Ladder values plus the half of the last, so every value has its halved partner."""
    values = [float(v) for v in values]
    return values + [values[-1] / 2.0]


def run_stability_experiment(base_cfg, axis, values, x0, seeds, threads=1):
    """Streamed coupled ladder: per path, simulate all levels on one path and keep only sup errors."""
    sim_values = ladder_with_partner(values)
    cfgs = ladder_configs(base_cfg, axis, sim_values)
    dt_fine = min(c.dt for c in cfgs)

    def one(seed):
        path = make_path(cfgs[0], seed, dt_fine)
        return coupled_sup_errors(simulate_coupled(cfgs, x0, path))

    per_path = np.array(_map(one, seeds, threads))
    return rate_from_sup_errors(per_path, sim_values)


# -- contraction -------------------------------------------------------------------

def contraction_check(ens1, ens2, K, tol=0.0):
    """``sup_t e^{-Kt} E||X_t - Y_t||^2_{H^-1} <= (1+tol) E||x0 - y0||^2_{H^-1}``.

    Also reports the smallest ``K`` for which the weighted bound holds.
    """
    if ens1.M != ens2.M or ens1.seeds != ens2.seeds:
        raise ValueError("ensembles are not driven by the same paths")
    if not np.array_equal(ens1.times, ens2.times):
        raise ValueError("ensembles do not share a time grid")
    L = laplacian(ens1.config.domain)
    d = np.array([[h_minus1_norm(L, x - y) ** 2 for x, y in zip(a.states, b.states)]
                  for a, b in zip(ens1.trajectories, ens2.trajectories)])
    mean, hw = mc_mean(d)
    t = ens1.times
    d0 = mean[0]
    weighted = np.exp(-K * t) * mean
    i = int(np.argmax(weighted))
    bound = (1.0 + tol) * d0
    if d0 > 0:
        with np.errstate(divide="ignore"):
            k_needed = np.where(t > 0, np.log(np.maximum(mean, 1e-300) / bound) / np.where(t > 0, t, 1), 0.0)
        k_min = float(max(0.0, np.max(k_needed)))
    else:
        k_min = 0.0 if np.all(mean == 0) else float("inf")
    return {
        "K": float(K),
        "lhs": float(weighted[i]),
        "rhs": float(bound),
        "argmax_time": float(t[i]),
        "halfwidth": float(hw[i]),
        "margin": float(bound - weighted[i]),
        "passed": bool(weighted[i] <= bound),
        "K_min": k_min,
        "mean_sq_diff": mean,
        "halfwidth_t": hw,
        "times": t,
        "initial_sq_diff": float(d0),
        "sup_sq_diff": float(np.max(mean)),
    }


# -- extinction ----------------------------------------------------------------------

def extinction_probe(ens, threshold):
    """First time per path with ``||X_t||_{H^-1} < threshold`` (``None`` if never)."""
    L = laplacian(ens.config.domain)
    out = []
    for tr in ens.trajectories:
        hit = None
        for t, x in zip(tr.times, tr.states):
            if h_minus1_norm(L, x) < threshold:
                hit = float(t)
                break
        out.append(hit)
    return out
