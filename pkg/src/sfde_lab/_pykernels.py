"""Pure numpy/scipy implementation of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable, or when
``SFDE_LAB_PURE=1`` is set. Signatures and return conventions match the
compiled module exactly.
"""

import numpy as np
from scipy.linalg import solve_banded

BACKEND = "python"

# regularization kind codes shared with the compiled module
KIND_LINEAR = 0
KIND_YOSIDA = 1
KIND_DELTA = 2

RESOLVENT_RTOL = 1e-13
RESOLVENT_MAX_ITER = 200


def thomas_solve(sub, diag, sup, rhs):
    """Solve a tridiagonal system.

    Row ``i`` reads ``sub[i]*x[i-1] + diag[i]*x[i] + sup[i]*x[i+1] = rhs[i]``;
    ``sub[0]`` and ``sup[-1]`` are ignored.
    """
    diag = np.asarray(diag, dtype=float)
    n = diag.shape[0]
    if n == 1:
        return np.asarray(rhs, dtype=float) / diag
    ab = np.zeros((3, n))
    ab[0, 1:] = np.asarray(sup, dtype=float)[:-1]
    ab[1] = diag
    ab[2, :-1] = np.asarray(sub, dtype=float)[1:]
    return solve_banded((1, 1), ab, np.asarray(rhs, dtype=float),
                        overwrite_ab=True, check_finite=False)


def resolvent_power(m, eps, r):
    """Solve ``s + eps*|s|^m sgn(s) = r`` elementwise for ``0 < m < 1``.

    Bracketing bisection on ``[0, |r|]`` down to
    ``|residual| <= 1e-13*(1+|r|)``, then one Newton polish step that is kept
    only if it does not increase the residual.
    """
    r = np.asarray(r, dtype=float)
    shape = r.shape
    r = r.reshape(-1)
    a = np.abs(r)
    lo = np.zeros_like(a)
    hi = a.copy()
    tol = RESOLVENT_RTOL * (1.0 + a)
    s = 0.5 * (lo + hi)
    active = a > 0.0
    s[~active] = 0.0
    for _ in range(RESOLVENT_MAX_ITER):
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        f = mid + eps * mid ** m - a
        done = active & (np.abs(f) <= tol)
        s = np.where(active, mid, s)
        pos = f > 0.0
        hi = np.where(active & pos, mid, hi)
        lo = np.where(active & ~pos, mid, lo)
        nxt = 0.5 * (lo + hi)
        # stalls once the bracket is a single ulp wide
        active = active & ~done & (nxt != lo) & (nxt != hi)
    f = s + eps * s ** m - a
    with np.errstate(divide="ignore", invalid="ignore"):
        s_new = s - f / (1.0 + eps * m * s ** (m - 1.0))
    ok = (s > 0.0) & np.isfinite(s_new) & (s_new >= 0.0)
    f_new = np.where(ok, s_new + eps * np.where(ok, s_new, 0.0) ** m - a, np.inf)
    s = np.where(ok & (np.abs(f_new) <= np.abs(f)), s_new, s)
    return (np.sign(r) * s).reshape(shape)


def resolvent(m, eps, r):
    """``J^eps r = (I + eps*phi)^{-1} r`` for ``phi(r) = |r|^m sgn(r)``."""
    r = np.asarray(r, dtype=float)
    if m == 0.0:
        return np.sign(r) * np.maximum(np.abs(r) - eps, 0.0)
    if m == 1.0:
        return r / (1.0 + eps)
    return resolvent_power(m, eps, r)


def phi_reg(kind, m, param, x):
    """Regularized nonlinearity and its derivative, elementwise."""
    x = np.asarray(x, dtype=float)
    if kind == KIND_LINEAR:
        return x.copy(), np.ones_like(x)
    if kind == KIND_DELTA:
        q = x * x + param
        return q ** (0.5 * (m - 1.0)) * x, q ** (0.5 * (m - 3.0)) * (param + m * x * x)
    # Yosida
    s = resolvent(m, param, x)
    phi = (x - s) / param
    if m == 0.0:
        dphi = np.where(np.abs(x) < param, 1.0 / param, 0.0)
    elif m == 1.0:
        dphi = np.full_like(x, 1.0 / (1.0 + param))
    else:
        p = np.abs(s) ** (1.0 - m)
        ds = p / (p + param * m)
        dphi = (1.0 - ds) / param
    return phi, dphi


ARMIJO_C = 1e-4
ARMIJO_MAX_HALVINGS = 60
# relative size below which changes of the merit functional are rounding noise
MERIT_RTOL = 1e-13


def _laplacian(u, inv_h2):
    lap = -2.0 * u
    lap[1:] += u[:-1]
    lap[:-1] += u[1:]
    return lap * inv_h2


def _residual(u, b, dt, eps, kind, m, param, h):
    phi, dphi = phi_reg(kind, m, param, u)
    w = eps * u + phi
    F = u - dt * _laplacian(w, 1.0 / (h * h)) - b
    return F, dphi


def psi_reg(kind, m, param, x):
    """Regularized potential matching :func:`phi_reg`, elementwise."""
    x = np.asarray(x, dtype=float)
    if kind == KIND_LINEAR:
        return 0.5 * x * x
    if kind == KIND_DELTA:
        e = 0.5 * (m + 1.0)
        return param ** e * np.expm1(e * np.log1p(x * x / param)) / (m + 1.0)
    s = resolvent(m, param, x)
    return 0.5 * (x - s) ** 2 / param + np.abs(s) ** (m + 1.0) / (m + 1.0)


def _merit(u, b, h, dt, eps, kind, m, param):
    # convex functional whose L2_h gradient is (-Lap)^{-1} F(u)
    v = u - b
    n = u.shape[0]
    off = np.full(n, -1.0 / (h * h))
    y = thomas_solve(off, np.full(n, 2.0 / (h * h)), off, v)
    return 0.5 * h * np.dot(v, y) + dt * h * np.sum(psi_reg(kind, m, param, u) + 0.5 * eps * u * u)


def implicit_solve(b, u0, h, dt, eps, kind, m, param, tol, max_iter):
    """Damped Newton for ``u - dt*Lap(eps*u + phi_reg(u)) = b``.

    The equation is the optimality condition of the convex functional
    ``G(u) = 1/2 ||u - b||^2_{H^-1} + dt*(eps/2 ||u||^2 + sum h psi_reg(u))``;
    Newton directions are descent directions for ``G`` and the step is
    backtracked until the Armijo condition on ``G`` holds. Once changes in
    ``G`` drop to rounding level, a decrease of the residual is accepted
    instead. Returns ``(u, residual_l2h, iterations, converged)`` with the
    residual ``sqrt(h*sum F^2)``.
    """
    b = np.asarray(b, dtype=float)
    u = np.array(u0, dtype=float)
    n = u.shape[0]
    c = dt / (h * h)
    F, dphi = _residual(u, b, dt, eps, kind, m, param, h)
    res = np.sqrt(h * np.dot(F, F))
    it = 0
    off = np.full(n, -1.0 / (h * h))
    two = np.full(n, 2.0 / (h * h))
    while res > tol and it < max_iter:
        it += 1
        d = eps + dphi
        diag = 1.0 + 2.0 * c * d
        sub = np.empty_like(d)
        sup = np.empty_like(d)
        sub[1:] = -c * d[:-1]
        sub[0] = 0.0
        sup[:-1] = -c * d[1:]
        sup[-1] = 0.0
        step = thomas_solve(sub, diag, sup, -F)
        slope = h * np.dot(thomas_solve(off, two, off, F), step)
        G0 = _merit(u, b, h, dt, eps, kind, m, param)
        t = 1.0
        accepted = False
        for _ in range(ARMIJO_MAX_HALVINGS):
            u_try = u + t * step
            F_try, dphi_try = _residual(u_try, b, dt, eps, kind, m, param, h)
            res_try = np.sqrt(h * np.dot(F_try, F_try))
            G_try = _merit(u_try, b, h, dt, eps, kind, m, param)
            if G_try <= G0 + ARMIJO_C * t * slope or (
                    abs(G_try - G0) <= MERIT_RTOL * abs(G0) and res_try < res):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return u, res, it, False
        u, F, dphi, res = u_try, F_try, dphi_try, res_try
    return u, res, it, bool(res <= tol)
