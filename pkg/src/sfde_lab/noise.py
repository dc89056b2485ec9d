"""Finite-mode Wiener paths and the diffusion operators ``B``.

A :class:`WienerPath` stores the Brownian values ``W(t_i)`` (one column per
mode) rather than raw increments, so coarsening is plain subsampling: every
resolution of a path is derived from the same fine values and compositions of
coarsenings agree bitwise.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import DomainMismatch


def path_seed(base_seed, index):
    """Deterministic 63-bit seed for path ``index`` of an ensemble."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True, eq=False)
class WienerPath:
    seed: int
    dt_fine: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2:
            raise ValueError("values must have shape (n_steps + 1, K) with n_steps >= 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self):
        return self.values.shape[0] - 1

    @property
    def K(self):
        return self.values.shape[1]

    @property
    def T(self):
        return self.n_steps * self.dt_fine

    @property
    def increments(self):
        return np.diff(self.values, axis=0)

    def same_as(self, other):
        return (self.seed == other.seed and self.dt_fine == other.dt_fine
                and np.array_equal(self.values, other.values))

    def save(self, path):
        """Binary dump (``.npz``) for exact replay."""
        np.savez(path, seed=np.int64(self.seed), dt_fine=self.dt_fine, values=self.values)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            return cls(int(z["seed"]), float(z["dt_fine"]), z["values"])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", self.seed, "dt_fine", repr(self.dt_fine)])
            w.writerow(["step"] + [f"dbeta_{k + 1}" for k in range(self.K)])
            for i, row in enumerate(self.increments):
                w.writerow([i] + [repr(float(x)) for x in row])


def sample_path(seed, dt_fine, n_steps, K):
    """Brownian path with ``K`` independent modes from a Philox stream."""
    if not dt_fine > 0:
        raise ValueError("dt_fine must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if K < 0:
        raise ValueError("K must be >= 0")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    inc = rng.standard_normal((n_steps, K)) * np.sqrt(dt_fine)
    values = np.zeros((n_steps + 1, K))
    np.cumsum(inc, axis=0, out=values[1:])
    return WienerPath(int(seed), float(dt_fine), values)


def coarsen(path, factor):
    """The same Brownian motion observed every ``factor`` steps."""
    factor = int(factor)
    if factor < 1 or path.n_steps % factor:
        raise ValueError(f"factor {factor} does not divide n_steps={path.n_steps}")
    if factor == 1:
        return path
    return WienerPath(path.seed, path.dt_fine * factor, path.values[::factor])


def path_for(path, dt):
    """Coarsen ``path`` to step ``dt``, which must be an integer multiple of its step."""
    ratio = dt / path.dt_fine
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9 * ratio:
        raise ValueError(f"dt={dt} is not a multiple of the path step {path.dt_fine}")
    return coarsen(path, factor)


# -- diffusion operators -----------------------------------------------------------

def _grid_c1_norm(g, h):
    """``sup|g| + sup|one-sided difference quotient|`` over interior nodes."""
    g = np.asarray(g, dtype=float)
    grad = np.abs(np.diff(g)) / h if g.size > 1 else np.zeros(1)
    return float(np.max(np.abs(g)) + (np.max(grad) if grad.size else 0.0))


class Additive:
    """``B dW = sum_k sigma^k dbeta^k``, independent of the state."""

    def __init__(self, domain, sigmas):
        s = np.atleast_2d(np.asarray(sigmas, dtype=float))
        if s.shape[1] != domain.n:
            raise DomainMismatch("mode fields must live on the domain's interior nodes")
        self.domain = domain
        self.sigmas = s
        self.K = s.shape[0]
        self.lipschitz = 0.0

    def apply(self, t, X, dW):
        dW = _check_dw(dW, self.K)
        return np.broadcast_to(dW @ self.sigmas, np.shape(X)).copy()

    def hs_norm_sq(self, X):
        return float(self.domain.h * np.sum(self.sigmas ** 2))

    def describe(self):
        return {"variant": "additive", "K": self.K}


class LinearMultiplicative:
    """``B(X) dW = sum_k g^k X dbeta^k`` with coefficients summable in C1."""

    def __init__(self, domain, coeffs):
        g = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if g.size and g.shape[1] != domain.n:
            raise DomainMismatch("coefficients must live on the domain's interior nodes")
        if not np.all(np.isfinite(g)):
            raise ValueError("coefficients must be finite")
        self.domain = domain
        self.coeffs = g
        self.K = g.shape[0] if g.size else 0
        self.c1_norms = np.array([_grid_c1_norm(gk, domain.h) for gk in g]) if self.K else np.zeros(0)
        self.c1_bound_sq = float(np.sum(self.c1_norms ** 2))
        self.c0_bound_sq = float(np.sum(np.max(np.abs(g), axis=1) ** 2)) if self.K else 0.0

    @classmethod
    def from_functions(cls, domain, funcs, c1_budget=None):
        """Sample ``funcs`` on the grid; rescale all modes jointly so that
        ``sum_k ||g^k||_{C1}^2 <= c1_budget`` when a budget is given."""
        g = np.array([domain.sample(f) for f in funcs])
        model = cls(domain, g)
        if c1_budget is not None and model.c1_bound_sq > c1_budget:
            model = cls(domain, g * np.sqrt(c1_budget / model.c1_bound_sq))
        return model

    @property
    def lipschitz(self):
        """Squared Lipschitz constant of ``B`` in H^-1 (the recorded C1 proxy)."""
        return self.c1_bound_sq

    def apply(self, t, X, dW):
        dW = _check_dw(dW, self.K)
        if self.K == 0:
            return np.zeros_like(np.asarray(X, dtype=float))
        return np.asarray(X, dtype=float) * (dW @ self.coeffs)

    def hs_norm_sq(self, X):
        X = np.asarray(X, dtype=float)
        return float(self.domain.h * np.sum((self.coeffs * X) ** 2))

    def describe(self):
        return {"variant": "linear_multiplicative", "K": self.K,
                "c1_bound_sq": self.c1_bound_sq, "c0_bound_sq": self.c0_bound_sq}


class GeneralLipschitz:
    """User operator ``(t, X, dW) -> increment`` with a declared H^-1 Lipschitz constant.

    ``hs`` optionally maps ``X`` to the squared Hilbert-Schmidt norm of ``B(X)``.
    """

    def __init__(self, K, operator, lipschitz, hs=None):
        self.K = int(K)
        self.operator = operator
        self.lipschitz = float(lipschitz)
        self._hs = hs

    def apply(self, t, X, dW):
        dW = _check_dw(dW, self.K)
        return np.asarray(self.operator(t, X, dW), dtype=float)

    def hs_norm_sq(self, X):
        if self._hs is None:
            raise NotImplementedError("no Hilbert-Schmidt norm supplied for this operator")
        return float(self._hs(X))

    def describe(self):
        return {"variant": "general_lipschitz", "K": self.K, "lipschitz": self.lipschitz}


def _check_dw(dW, K):
    dW = np.asarray(dW, dtype=float).reshape(-1)
    if dW.size != K:
        raise ValueError(f"expected {K} mode increments, got {dW.size}")
    return dW


def apply_B(model, t, X, dW):
    if model is None:
        _check_dw(dW, 0)
        return np.zeros_like(np.asarray(X, dtype=float))
    return model.apply(t, X, dW)


def hs_norm_sq(model, X):
    if model is None:
        return 0.0
    return model.hs_norm_sq(X)


def n_modes(model):
    return 0 if model is None else model.K
