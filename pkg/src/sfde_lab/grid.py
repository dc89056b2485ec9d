"""Uniform 1D Dirichlet grid, discrete Laplacian and the H^-1 / H^1_0 / L^p calculus.

Grid functions live on the ``n`` interior nodes ``x_j = a + j*h`` (``j = 1..n``);
the boundary values are identically zero and never stored. The discrete L2
pairing carries weight ``h`` on every interior node, which makes the sine modes
exactly orthogonal and ``(-Lap_h)`` exactly diagonal in them.

Functions take either a :class:`GridFunction` or a plain float array of length
``n`` and return plain arrays.
"""

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.fft import dst

from . import kernels
from .report import CertificateReport, CheckResult
from .scalar import phi_set


class DomainMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Domain1D:
    n: int
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("need b > a")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("need n >= 1 interior nodes")

    @property
    def length(self):
        return self.b - self.a

    @property
    def h(self):
        return (self.b - self.a) / (self.n + 1)

    @property
    def x(self):
        return self.a + self.h * np.arange(1, self.n + 1)

    def sample(self, f):
        """Evaluate a callable on the interior nodes."""
        return np.asarray(f(self.x), dtype=float) * np.ones(self.n)


@dataclass(frozen=True, eq=False)
class GridFunction:
    domain: Domain1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.domain.n,):
            raise DomainMismatch(f"expected {self.domain.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, domain, f):
        return cls(domain, domain.sample(f))

    def to_csv(self, path):
        write_csv(path, self.domain, self.values)

    @classmethod
    def from_csv(cls, path, domain):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        vals = [float(r[1]) for r in rows[1:]]
        return cls(domain, np.array(vals))


def write_csv(path, domain, values):
    """Write ``(x, value)`` rows, boundary nodes excluded."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "value"])
        for xj, vj in zip(domain.x, np.asarray(values, dtype=float)):
            w.writerow([repr(float(xj)), repr(float(vj))])


class DirichletLaplacian:
    """Three-point Laplacian with homogeneous Dirichlet data on ``domain``."""

    def __init__(self, domain):
        if isinstance(domain, int):
            domain = Domain1D(domain)
        self.domain = domain
        self.n = domain.n
        self.h = domain.h

    @cached_property
    def eigenvalues(self):
        """``lambda_k = (4/h^2) sin^2(k pi h / (2 L))`` for ``k = 1..n`` (of ``-Lap_h``)."""
        k = np.arange(1, self.n + 1)
        return 4.0 / self.h ** 2 * np.sin(k * np.pi * self.h / (2.0 * self.domain.length)) ** 2

    def eigenvector(self, k, normalized=True):
        """Discrete sine mode ``sin(k pi (x - a)/L)``, unit norm in L2_h if ``normalized``."""
        if not 1 <= k <= self.n:
            raise ValueError(f"mode index must lie in 1..{self.n}")
        d = self.domain
        v = np.sin(k * np.pi * (d.x - d.a) / d.length)
        if normalized:
            v = v * np.sqrt(2.0 / d.length)
        return v

    def values(self, u):
        if isinstance(u, GridFunction):
            if u.domain != self.domain:
                raise DomainMismatch("grid function lives on a different domain")
            return u.values
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.n:
            raise DomainMismatch(f"expected {self.n} values, got shape {u.shape}")
        return u


# -- operators -----------------------------------------------------------------

def apply_laplacian(L, u):
    u = L.values(u)
    lap = -2.0 * u
    lap[..., 1:] += u[..., :-1]
    lap[..., :-1] += u[..., 1:]
    return lap / (L.h * L.h)


def solve_resolvent(L, lam, f):
    """Solve ``(I - lam*Lap_h) u = f`` by a tridiagonal sweep."""
    if lam < 0:
        raise ValueError("resolvent parameter must be nonnegative")
    f = L.values(f)
    if lam == 0:
        return f.copy()
    c = lam / (L.h * L.h)
    n = L.n
    off = np.full(n, -c)
    return kernels.thomas_solve(off, np.full(n, 1.0 + 2.0 * c), off, f)


def inv_neg_laplacian(L, f):
    """Solve ``-Lap_h u = f``."""
    f = L.values(f)
    n = L.n
    c = 1.0 / (L.h * L.h)
    off = np.full(n, -c)
    return kernels.thomas_solve(off, np.full(n, 2.0 * c), off, f)


def l2_inner(L, u, v):
    return float(L.h * np.dot(L.values(u), L.values(v)))


def l2_norm(L, u):
    u = L.values(u)
    return float(np.sqrt(L.h * np.dot(u, u)))


def h_minus1_inner(L, u, v):
    """``(u, (-Lap_h)^{-1} v)`` in L2_h."""
    return l2_inner(L, u, inv_neg_laplacian(L, v))


def h_minus1_norm(L, u):
    return float(np.sqrt(max(h_minus1_inner(L, u, u), 0.0)))


def h1_norm(L, u):
    u = L.values(u)
    padded = np.concatenate(([0.0], u, [0.0]))
    return float(np.sqrt(np.sum(np.diff(padded) ** 2) / L.h))


def lp_norm(L, u, p):
    if p < 1:
        raise ValueError("p must be >= 1")
    u = L.values(u)
    return float((L.h * np.sum(np.abs(u) ** p)) ** (1.0 / p))


def varphi_energy(L, m, u):
    """``||u||_{m+1}^{m+1} / (m+1)``; for ``m = 0`` the L1_h mass of the density."""
    u = L.values(u)
    return float(L.h * np.sum(np.abs(u) ** (m + 1.0)) / (m + 1.0))


def sine_coefficients(L, u):
    """Coefficients of ``u`` in the L2_h-orthonormal sine basis."""
    u = L.values(u)
    # DST-I with norm="ortho" uses sqrt(2/(n+1)) sin(pi k j/(n+1)); ours adds sqrt(h)
    return dst(u, type=1, norm="ortho") * np.sqrt(L.h)


def from_sine_coefficients(L, c):
    return dst(np.asarray(c, dtype=float), type=1, norm="ortho") / np.sqrt(L.h)


def galerkin_project(L, u, n_modes):
    """Orthogonal projection onto the first ``n_modes`` sine modes."""
    if not 1 <= n_modes <= L.n:
        raise ValueError(f"n_modes must lie in 1..{L.n}")
    u = L.values(u)
    if n_modes == L.n:
        return u.copy()
    c = sine_coefficients(L, u)
    c[n_modes:] = 0.0
    return from_sine_coefficients(L, c)


def smooth_initial(L, x0, n):
    """The regularized initial datum ``J^{1/n} x0 = (I - Lap_h/n)^{-1} x0``."""
    return solve_resolvent(L, 1.0 / n, x0)


def subgradient_check(L, m, u, w, y_samples, tol=1e-9):
    """Check that ``-Lap_h w`` is a subgradient of ``varphi`` at ``u`` in H^-1.

    Requires ``w_j`` in ``phi(u_j)`` at every node (to ``tol``); then verifies
    ``varphi(u) <= (-Lap_h w, u - y)_{H^-1} + varphi(y)`` for each sample ``y``.
    """
    u = L.values(u)
    w = L.values(w)
    lo, hi = phi_set(m, u)
    lo = np.atleast_1d(lo)
    hi = np.atleast_1d(hi)
    bad = np.flatnonzero((w < lo - tol) | (w > hi + tol))
    report = CertificateReport(context={"m": m, "n": L.n})
    if bad.size:
        j = int(bad[0])
        report.add(CheckResult(
            "precondition_selection", False,
            float(-max(lo[j] - w[j], w[j] - hi[j])),
            {"node": j, "u": float(u[j]), "w": float(w[j])}, int(bad.size)))
        return report
    report.add(CheckResult("precondition_selection", True, 0.0, None, L.n))
    g = -apply_laplacian(L, w)
    phi_u = varphi_energy(L, m, u)
    margins = []
    for y in y_samples:
        y = L.values(y)
        margins.append(h_minus1_inner(L, g, u - y) + varphi_energy(L, m, y) - phi_u)
    margins = np.asarray(margins)
    i = int(np.argmin(margins)) if margins.size else 0
    report.add(CheckResult(
        "subgradient_inequality",
        bool(np.all(margins >= -tol)),
        float(margins[i]) if margins.size else 0.0,
        {"sample": i},
        int(margins.size)))
    return report


def operator_certificate(L, seed=0, n_samples=20, lams=(1e-3, 1e-1, 1.0), ps=(1.0, 1.5, 2.0), tol=1e-9):
    """Eigen-identity, resolvent contraction and H^-1 / H^1_0 duality on random data.

    Contraction of ``J = (I - lam*Lap_h)^{-1}`` is checked on differences
    ``J u - J v = J (u - v)`` in H^-1 and in L^p for each ``p`` in ``ps``.
    """
    rng = np.random.default_rng(seed)
    report = CertificateReport(context={"n": L.n, "n_samples": n_samples})
    lam = L.eigenvalues
    worst, arg = np.inf, None
    for k in range(1, L.n + 1):
        v = L.eigenvector(k)
        err = np.max(np.abs(-apply_laplacian(L, v) - lam[k - 1] * v)) / lam[k - 1]
        if -err < worst:
            worst, arg = -err, k
    report.add(CheckResult("eigen_identity", bool(worst >= -tol), float(worst), {"k": arg}, L.n))
    diffs = rng.standard_normal((n_samples, L.n)) * rng.uniform(0.1, 10.0, (n_samples, 1))
    norms = {"h_minus1": lambda u: h_minus1_norm(L, u)}
    for p in ps:
        norms[f"l{p:g}"] = (lambda q: lambda u: lp_norm(L, u, q))(p)
    for name, norm in norms.items():
        margins, pts = [], []
        for lam_ in lams:
            for i, d in enumerate(diffs):
                nd = norm(d)
                margins.append((nd - norm(solve_resolvent(L, lam_, d))) / nd)
                pts.append({"lam": lam_, "sample": i})
        margins = np.asarray(margins)
        i = int(np.argmin(margins))
        report.add(CheckResult(f"resolvent_contraction_{name}", bool(margins[i] >= -tol),
                               float(margins[i]), pts[i], margins.size))
    rel = []
    for w in diffs:
        a = h_minus1_norm(L, -apply_laplacian(L, w))
        b = h1_norm(L, w)
        rel.append(-abs(a - b) / b)
    rel = np.asarray(rel)
    i = int(np.argmin(rel))
    report.add(CheckResult("duality", bool(rel[i] >= -tol), float(rel[i]), {"sample": i}, rel.size))
    return report


def random_selection(m, u, rng):
    """A selection ``w`` of ``phi(u)``; at zeros of ``u`` for ``m = 0`` it is uniform in ``[-1, 1]``."""
    u = np.asarray(u, dtype=float)
    w = np.sign(u) * np.abs(u) ** m
    if m == 0:
        z = u == 0
        w[z] = rng.uniform(-1.0, 1.0, int(z.sum()))
    return w


def subgradient_certificate(L, m, n_triples=100, seed=0, tol=1e-9):
    """Random ``(u, w, y)`` triples with ``w`` in ``phi(u)``.

    About a quarter of the nodes of ``u`` are set to 0; ``y`` is ``u`` plus
    noise at a log-uniform distance, so near-tight cases are sampled too.
    """
    rng = np.random.default_rng(seed)
    margins, worst_i = [], 0
    ok = True
    for i in range(n_triples):
        u = rng.standard_normal(L.n) * rng.uniform(0.1, 5.0)
        u[rng.random(L.n) < 0.25] = 0.0
        w = random_selection(m, u, rng)
        y = u + rng.standard_normal(L.n) * 10.0 ** rng.uniform(-3.0, 0.7)
        rep = subgradient_check(L, m, u, w, [y], tol=tol)
        ok = ok and rep.passed
        margins.append(min(c.min_margin for c in rep.checks.values()
                           if c.name == "subgradient_inequality"))
        if margins[-1] < margins[worst_i]:
            worst_i = i
    report = CertificateReport(context={"m": m, "n": L.n})
    report.add(CheckResult("subgradient_inequality", bool(ok), float(margins[worst_i]),
                           {"triple": worst_i}, n_triples))
    return report
