"""Pointwise calculus of the power potential and its two regularizations.

The potential is ``psi(r) = |r|^(m+1)/(m+1)`` with ``m`` in ``[0, 1]``; its
subdifferential ``phi = d psi`` is the (multivalued, for ``m = 0``) power
``|r|^m Sgn(r)``. Two smooth stand-ins are provided:

* the Moreau-Yosida envelope ``psi^eps`` with gradient ``phi^eps`` and
  resolvent ``J^eps = (I + eps*phi)^{-1}``;
* the delta-smoothing ``psi^delta(r) = ((r^2+delta)^((m+1)/2) - delta^((m+1)/2))/(m+1)``.

All functions accept scalars or numpy arrays and broadcast elementwise.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .report import CertificateReport, CheckResult

# absolute floating-point allowance used when certifying inequalities that can
# hold with equality (scaled by 1 + |value|)
ROUNDING_ALLOWANCE = 1e-12


# sup over r and delta of phi'^d(r) r^2 / psi^d(r) is 2 (approached as r -> 0),
# so the smallest delta-independent growth constant is max(2, (m+1)^2)
def sharp_growth_constant(m):
    return max(2.0, (m + 1.0) ** 2)


# constant in (phi^e1(a) - phi^e2(b))(a - b) >= -C (e1 + e2)(1 + a^2 + b^2);
# from |phi^e(a)|^2 <= |a|^(2m) <= 1 + a^2
MONOTONE_DEFECT_CONSTANT = 1.0


@dataclass(frozen=True)
class PowerNonlinearity:
    m: float

    def __post_init__(self):
        if not (0.0 <= self.m <= 1.0):
            raise ValueError(f"exponent m must lie in [0, 1], got {self.m}")


@dataclass(frozen=True)
class YosidaRegularization:
    eps_y: float

    def __post_init__(self):
        if not self.eps_y > 0.0:
            raise ValueError(f"eps_y must be positive, got {self.eps_y}")

    @property
    def kind(self):
        return kernels.KIND_YOSIDA

    @property
    def param(self):
        return self.eps_y


@dataclass(frozen=True)
class DeltaSmoothing:
    delta: float

    def __post_init__(self):
        if not (0.0 < self.delta <= 1.0):
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")

    @property
    def kind(self):
        return kernels.KIND_DELTA

    @property
    def param(self):
        return self.delta


def _m(nl):
    if isinstance(nl, PowerNonlinearity):
        return float(nl.m)
    return float(PowerNonlinearity(float(nl)).m)


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def psi(nl, r):
    m = _m(nl)
    return _out(np.abs(np.asarray(r, dtype=float)) ** (m + 1.0) / (m + 1.0))


def phi_set(nl, r):
    """Return ``(lower, upper)`` endpoints of the closed interval ``phi(r)``.

    Singletons have ``lower == upper``; for ``m = 0`` the value at ``r = 0`` is
    the whole interval ``[-1, 1]``.
    """
    m = _m(nl)
    r = np.asarray(r, dtype=float)
    if m == 0.0:
        lo = np.where(r > 0, 1.0, -1.0)
        hi = np.where(r < 0, -1.0, 1.0)
    else:
        lo = hi = np.abs(r) ** m * np.sign(r)
    return _out(lo), _out(hi)


def min_section_norm(nl, r):
    """``inf{|eta| : eta in phi(r)}``; zero at ``r = 0`` for every ``m``."""
    m = _m(nl)
    r = np.asarray(r, dtype=float)
    if m == 0.0:
        return _out(np.where(r == 0.0, 0.0, 1.0))
    return _out(np.abs(r) ** m)


def resolvent_scalar(nl, eps_y, r):
    """The unique ``s`` with ``s + eps_y*phi(s)`` containing ``r``."""
    if not eps_y > 0:
        raise ValueError("eps_y must be positive")
    r = np.asarray(r, dtype=float)
    return _out(kernels.resolvent(_m(nl), float(eps_y), r).reshape(r.shape))


def yosida_phi(nl, eps_y, r):
    r = np.asarray(r, dtype=float)
    return _out((r - resolvent_scalar(nl, eps_y, r)) / eps_y)


def moreau_psi(nl, eps_y, r):
    """Moreau-Yosida envelope, evaluated through its resolvent identity."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(resolvent_scalar(nl, eps_y, r))
    g = (r - s) / eps_y
    return _out(0.5 * eps_y * g * g + np.asarray(psi(nl, s)))


def huber(eps_y, r):
    """Closed-form envelope of ``|r|``: ``r^2/(2 eps)`` inside, ``|r| - eps/2`` outside."""
    a = np.abs(np.asarray(r, dtype=float))
    return _out(np.where(a <= eps_y, a * a / (2.0 * eps_y), a - 0.5 * eps_y))


def smoothed_psi_delta(nl, delta, r):
    m = _m(nl)
    r = np.asarray(r, dtype=float)
    p = 0.5 * (m + 1.0)
    # expm1/log1p keep full relative accuracy when r*r << delta
    return _out(delta ** p * np.expm1(p * np.log1p(r * r / delta)) / (m + 1.0))


def smoothed_phi_delta(nl, delta, r):
    m = _m(nl)
    r = np.asarray(r, dtype=float)
    return _out((r * r + delta) ** (0.5 * (m - 1.0)) * r)


def smoothed_dphi_delta(nl, delta, r):
    m = _m(nl)
    r = np.asarray(r, dtype=float)
    return _out((r * r + delta) ** (0.5 * (m - 3.0)) * (delta + m * r * r))


# -- regularization dispatch used by the solver --------------------------------

def reg_kind(m, reg):
    """Kernel code and parameter for a regularization (``None`` means linear, m=1)."""
    if reg is None:
        if m != 1.0:
            raise ValueError("regularization None is only allowed for m = 1")
        return kernels.KIND_LINEAR, 0.0
    if m == 1.0 and isinstance(reg, DeltaSmoothing):
        # psi^delta is exactly r^2/2 here; the linear kernel avoids rounding in (r^2+d)/(r^2+d)
        return kernels.KIND_LINEAR, 0.0
    return reg.kind, float(reg.param)


def psi_reg(m, reg, r):
    if reg is None:
        return psi(m, r)
    if isinstance(reg, YosidaRegularization):
        return moreau_psi(m, reg.eps_y, r)
    return smoothed_psi_delta(m, reg.delta, r)


def phi_reg(m, reg, r):
    kind, param = reg_kind(m, reg)
    r = np.asarray(r, dtype=float)
    val, _ = kernels.phi_reg(kind, float(m), param, r)
    return _out(val.reshape(r.shape))


def dphi_reg(m, reg, r):
    kind, param = reg_kind(m, reg)
    r = np.asarray(r, dtype=float)
    _, d = kernels.phi_reg(kind, float(m), param, r)
    return _out(d.reshape(r.shape))


def lipschitz_constant(m, reg):
    """Lipschitz constant of ``phi_reg``: ``1/eps_y``, ``delta^((m-1)/2)`` or 1."""
    if reg is None:
        reg_kind(m, reg)
        return 1.0
    if isinstance(reg, YosidaRegularization):
        return 1.0 / reg.eps_y
    return reg.delta ** (0.5 * (m - 1.0))


def potential_gap_bound(m, reg):
    """Pointwise bound on ``psi - psi_reg`` (used as a per-unit-volume slack).

    Yosida: ``eps*|phi(r)|^2 <= eps*(1 + (m+1) psi(r))``, reported as the pair
    ``(eps, eps*(m+1))`` of constant and ``psi``-proportional parts.
    Delta: ``(2/(m+1)) delta^((m+1)/2)`` (constant part only).
    """
    if reg is None:
        return 0.0, 0.0
    if isinstance(reg, YosidaRegularization):
        return reg.eps_y, reg.eps_y * (m + 1.0)
    return 2.0 / (m + 1.0) * reg.delta ** (0.5 * (m + 1.0)), 0.0


# -- certificates ---------------------------------------------------------------

def _check(name, margin, points, scale):
    margin = np.asarray(margin, dtype=float).ravel()
    allowance = ROUNDING_ALLOWANCE * (1.0 + np.abs(np.asarray(scale, dtype=float).ravel()))
    slack = margin + allowance
    i = int(np.argmin(margin))
    worst = points[i] if not isinstance(points, np.ndarray) else points.reshape(len(margin), -1)[i]
    if isinstance(worst, np.ndarray):
        worst = worst.tolist()
        worst = worst[0] if len(worst) == 1 else worst
    return CheckResult(name, bool(np.all(slack >= 0.0)), float(margin[i]), worst, margin.size)


def verify_scalar_inequalities(nl, reg, r_grid, pair_grid=None):
    """Certify the envelope and smoothing inequalities over finite grids.

    ``reg`` is one regularization or a sequence of them. For every Yosida
    parameter: (a) sandwich ``psi(J r) <= psi^eps(r) <= psi(r)``, (b)
    ``|psi - psi^eps| <= eps |phi(r)|^2`` and, over every ordered pair of
    Yosida parameters and every ``(a, b)`` in the Cartesian square of
    ``pair_grid`` (default ``r_grid``), (c) the perturbed monotonicity bound.
    For every delta: (d) ``phi^d r >= (m+1) psi^d - 1`` and
    ``phi'^d r^2 <= (m+1)^2 psi^d`` (``d_growth``; alongside it ``d_growth_sharp``
    with the constant ``max(2, (m+1)^2)``, since near ``r = 0`` the ratio tends
    to 2, which exceeds ``(m+1)^2`` once ``m < sqrt(2) - 1``), and (e)
    ``|psi^d - psi| <= (2/(m+1)) delta^((m+1)/2)``.
    """
    m = _m(nl)
    r = np.asarray(r_grid, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("r_grid must be nonempty")
    if not np.all(np.isfinite(r)):
        raise ValueError("r_grid must be finite")
    pr = r if pair_grid is None else np.asarray(pair_grid, dtype=float).ravel()
    regs = list(reg) if isinstance(reg, (list, tuple)) else [reg]
    yos = [g for g in regs if isinstance(g, YosidaRegularization)]
    dels = [g for g in regs if isinstance(g, DeltaSmoothing)]
    if len(yos) + len(dels) != len(regs):
        raise TypeError("reg must be YosidaRegularization or DeltaSmoothing")

    report = CertificateReport(context={"m": m, "n_r": int(r.size), "n_pair": int(pr.size)})
    psi_r = np.asarray(psi(m, r))
    for g in yos:
        e = g.eps_y
        tag = f"[eps={e:g}]"
        s = np.asarray(resolvent_scalar(m, e, r))
        env = np.asarray(moreau_psi(m, e, r))
        report.add(_check("a_lower" + tag, env - np.asarray(psi(m, s)), r, env))
        report.add(_check("a_upper" + tag, psi_r - env, r, psi_r))
        bound = e * np.asarray(min_section_norm(m, r)) ** 2
        report.add(_check("b_envelope_error" + tag, bound - np.abs(psi_r - env), r, psi_r))
    if yos:
        A, B = np.meshgrid(pr, pr, indexing="ij")
        A = A.ravel()
        B = B.ravel()
        pts = np.stack([A, B], axis=1)
        cache = {g.eps_y: np.asarray(yosida_phi(m, g.eps_y, pr)) for g in yos}
        idx_a = np.repeat(np.arange(pr.size), pr.size)
        idx_b = np.tile(np.arange(pr.size), pr.size)
        for g1 in yos:
            for g2 in yos:
                e1, e2 = g1.eps_y, g2.eps_y
                prod = (cache[e1][idx_a] - cache[e2][idx_b]) * (A - B)
                rhs = -MONOTONE_DEFECT_CONSTANT * (e1 + e2) * (1.0 + A * A + B * B)
                report.add(_check(f"c_monotone[eps1={e1:g},eps2={e2:g}]", prod - rhs, pts, rhs))
    for g in dels:
        d = g.delta
        tag = f"[delta={d:g}]"
        pd = np.asarray(smoothed_psi_delta(m, d, r))
        fd = np.asarray(smoothed_phi_delta(m, d, r))
        dd = np.asarray(smoothed_dphi_delta(m, d, r))
        report.add(_check("d_coercive" + tag, fd * r - ((m + 1.0) * pd - 1.0), r, pd))
        report.add(_check("d_growth" + tag, (m + 1.0) ** 2 * pd - dd * r * r, r, pd))
        report.add(_check("d_growth_sharp" + tag,
                          sharp_growth_constant(m) * pd - dd * r * r, r, pd))
        report.add(_check("d_convex" + tag, dd, r, dd))
        bound = 2.0 / (m + 1.0) * d ** (0.5 * (m + 1.0))
        report.add(_check("e_delta_error" + tag, bound - np.abs(pd - psi_r), r, psi_r))
    return report
