# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: tridiagonal solves, power resolvents, implicit Newton.

Mirrors ``_pykernels`` function by function. The Newton loop runs without the
GIL so ensemble paths can be stepped from worker threads.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport expm1, fabs, log1p, pow, sqrt

cnp.import_array()

BACKEND = "cython"

KIND_LINEAR = 0
KIND_YOSIDA = 1
KIND_DELTA = 2

cdef double _RTOL = 1e-13
cdef int _MAXIT = 200
cdef double _ARMIJO_C = 1e-4
cdef int _ARMIJO_MAX = 60
cdef double _MERIT_RTOL = 1e-13

RESOLVENT_RTOL = _RTOL
RESOLVENT_MAX_ITER = _MAXIT
ARMIJO_C = _ARMIJO_C
ARMIJO_MAX_HALVINGS = _ARMIJO_MAX
MERIT_RTOL = _MERIT_RTOL


cdef void _thomas(const double[:] sub, const double[:] diag, const double[:] sup,
                  const double[:] rhs, double[:] x, double[:] cp, double[:] dp) noexcept nogil:
    cdef Py_ssize_t n = diag.shape[0]
    cdef Py_ssize_t i
    cdef double denom
    cp[0] = sup[0] / diag[0] if n > 1 else 0.0
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - sub[i] * cp[i - 1]
        if i < n - 1:
            cp[i] = sup[i] / denom
        dp[i] = (rhs[i] - sub[i] * dp[i - 1]) / denom
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]


def thomas_solve(sub, diag, sup, rhs):
    """Solve a tridiagonal system (row ``i``: sub[i], diag[i], sup[i])."""
    cdef double[:] d = np.ascontiguousarray(diag, dtype=np.float64)
    cdef Py_ssize_t n = d.shape[0]
    cdef double[:] a = np.ascontiguousarray(sub, dtype=np.float64)
    cdef double[:] c = np.ascontiguousarray(sup, dtype=np.float64)
    cdef double[:] r = np.ascontiguousarray(rhs, dtype=np.float64)
    out = np.empty(n)
    cdef double[:] x = out
    cdef double[:] cp = np.empty(n)
    cdef double[:] dp = np.empty(n)
    with nogil:
        _thomas(a, d, c, r, x, cp, dp)
    return out


cdef inline double _sgn(double x) noexcept nogil:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


cdef double _resolvent_power(double m, double eps, double r) noexcept nogil:
    cdef double a = fabs(r)
    cdef double lo = 0.0, hi = a, mid = 0.0, f, tol, s, fs, snew, fnew, nxt
    cdef int it
    if a == 0.0:
        return 0.0
    tol = _RTOL * (1.0 + a)
    for it in range(_MAXIT):
        mid = 0.5 * (lo + hi)
        f = mid + eps * pow(mid, m) - a
        if fabs(f) <= tol:
            break
        if f > 0.0:
            hi = mid
        else:
            lo = mid
        nxt = 0.5 * (lo + hi)
        if nxt == lo or nxt == hi:
            break
    s = mid
    fs = s + eps * pow(s, m) - a
    if s > 0.0:
        snew = s - fs / (1.0 + eps * m * pow(s, m - 1.0))
        if snew >= 0.0:
            fnew = snew + eps * pow(snew, m) - a
            if fabs(fnew) <= fabs(fs):
                s = snew
    return _sgn(r) * s


cdef inline double _resolvent(double m, double eps, double r) noexcept nogil:
    cdef double a
    if m == 0.0:
        a = fabs(r) - eps
        return _sgn(r) * a if a > 0.0 else 0.0
    if m == 1.0:
        return r / (1.0 + eps)
    return _resolvent_power(m, eps, r)


def resolvent_power(double m, double eps, r):
    """Elementwise root of ``s + eps*|s|^m sgn(s) = r`` for ``0 < m < 1``."""
    arr = np.ascontiguousarray(r, dtype=np.float64)
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    cdef double[:] rv = flat
    cdef double[:] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(rv.shape[0]):
            ov[i] = _resolvent_power(m, eps, rv[i])
    return out.reshape(arr.shape)


def resolvent(double m, double eps, r):
    arr = np.ascontiguousarray(r, dtype=np.float64)
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    cdef double[:] rv = flat
    cdef double[:] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(rv.shape[0]):
            ov[i] = _resolvent(m, eps, rv[i])
    return out.reshape(arr.shape)


cdef inline void _phi_reg1(int kind, double m, double param, double x,
                           double* phi, double* dphi) noexcept nogil:
    cdef double q, s, p, ds
    if kind == 0:
        phi[0] = x
        dphi[0] = 1.0
    elif kind == 2:
        q = x * x + param
        phi[0] = pow(q, 0.5 * (m - 1.0)) * x
        dphi[0] = pow(q, 0.5 * (m - 3.0)) * (param + m * x * x)
    else:
        s = _resolvent(m, param, x)
        phi[0] = (x - s) / param
        if m == 0.0:
            dphi[0] = 1.0 / param if fabs(x) < param else 0.0
        elif m == 1.0:
            dphi[0] = 1.0 / (1.0 + param)
        else:
            p = pow(fabs(s), 1.0 - m)
            ds = p / (p + param * m)
            dphi[0] = (1.0 - ds) / param


def phi_reg(int kind, double m, double param, x):
    """Regularized nonlinearity and its derivative, elementwise."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    flat = arr.reshape(-1)
    phi = np.empty_like(flat)
    dphi = np.empty_like(flat)
    cdef double[:] xv = flat
    cdef double[:] pv = phi
    cdef double[:] dv = dphi
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            _phi_reg1(kind, m, param, xv[i], &pv[i], &dv[i])
    return phi.reshape(arr.shape), dphi.reshape(arr.shape)


cdef double _residual(const double[:] u, const double[:] b, double c, double eps,
                      int kind, double m, double param, double h,
                      double[:] F, double[:] w, double[:] dphi) noexcept nogil:
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t j
    cdef double phi, lap, acc = 0.0, left, right
    for j in range(n):
        _phi_reg1(kind, m, param, u[j], &phi, &dphi[j])
        w[j] = eps * u[j] + phi
    for j in range(n):
        left = w[j - 1] if j > 0 else 0.0
        right = w[j + 1] if j < n - 1 else 0.0
        lap = left - 2.0 * w[j] + right
        F[j] = u[j] - c * lap - b[j]
        acc += F[j] * F[j]
    return sqrt(h * acc)


cdef inline double _psi_reg1(int kind, double m, double param, double x) noexcept nogil:
    cdef double s, e
    if kind == 0:
        return 0.5 * x * x
    if kind == 2:
        e = 0.5 * (m + 1.0)
        return pow(param, e) * expm1(e * log1p(x * x / param)) / (m + 1.0)
    s = _resolvent(m, param, x)
    return 0.5 * (x - s) * (x - s) / param + pow(fabs(s), m + 1.0) / (m + 1.0)


def psi_reg(int kind, double m, double param, x):
    """Regularized potential matching :func:`phi_reg`, elementwise."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    cdef double[:] xv = flat
    cdef double[:] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = _psi_reg1(kind, m, param, xv[i])
    return out.reshape(arr.shape)


cdef double _merit(const double[:] u, const double[:] b, double h, double dt, double eps,
                   int kind, double m, double param, double[:] v, double[:] y,
                   const double[:] off, const double[:] two,
                   double[:] cp, double[:] dp) noexcept nogil:
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t j
    cdef double quad = 0.0, pot = 0.0
    for j in range(n):
        v[j] = u[j] - b[j]
    _thomas(off, two, off, v, y, cp, dp)
    for j in range(n):
        quad += v[j] * y[j]
        pot += _psi_reg1(kind, m, param, u[j]) + 0.5 * eps * u[j] * u[j]
    return 0.5 * h * quad + dt * h * pot


def implicit_solve(b, u0, double h, double dt, double eps, int kind, double m,
                   double param, double tol, int max_iter):
    """Damped Newton for ``u - dt*Lap(eps*u + phi_reg(u)) = b``.

    Armijo backtracking on the convex merit functional whose gradient is
    ``(-Lap)^{-1} F``; see the pure-Python twin for the details.
    Returns ``(u, residual_l2h, iterations, converged)``.
    """
    cdef double[:] bv = np.ascontiguousarray(b, dtype=np.float64)
    out = np.array(u0, dtype=np.float64, copy=True, order="C")
    cdef double[:] u = out
    cdef Py_ssize_t n = u.shape[0]
    cdef double[:] F = np.empty(n)
    cdef double[:] Ft = np.empty(n)
    cdef double[:] w = np.empty(n)
    cdef double[:] dphi = np.empty(n)
    cdef double[:] dphit = np.empty(n)
    cdef double[:] ut = np.empty(n)
    cdef double[:] sub = np.empty(n)
    cdef double[:] diag = np.empty(n)
    cdef double[:] sup = np.empty(n)
    cdef double[:] rhs = np.empty(n)
    cdef double[:] step = np.empty(n)
    cdef double[:] cp = np.empty(n)
    cdef double[:] dp = np.empty(n)
    cdef double[:] v = np.empty(n)
    cdef double[:] y = np.empty(n)
    cdef double[:] off = np.full(n, -1.0 / (h * h))
    cdef double[:] two = np.full(n, 2.0 / (h * h))
    cdef double c = dt / (h * h)
    cdef double res, res_t = 0.0, t, d, slope, G0, Gt
    cdef int it = 0, k
    cdef bint accepted = True
    cdef Py_ssize_t j
    with nogil:
        res = _residual(u, bv, c, eps, kind, m, param, h, F, w, dphi)
        while res > tol and it < max_iter:
            it += 1
            for j in range(n):
                d = eps + dphi[j]
                diag[j] = 1.0 + 2.0 * c * d
                if j + 1 < n:
                    sub[j + 1] = -c * d
                if j > 0:
                    sup[j - 1] = -c * d
                rhs[j] = -F[j]
            sub[0] = 0.0
            sup[n - 1] = 0.0
            _thomas(sub, diag, sup, rhs, step, cp, dp)
            _thomas(off, two, off, F, y, cp, dp)
            slope = 0.0
            for j in range(n):
                slope += y[j] * step[j]
            slope *= h
            G0 = _merit(u, bv, h, dt, eps, kind, m, param, v, y, off, two, cp, dp)
            t = 1.0
            accepted = False
            for k in range(_ARMIJO_MAX):
                for j in range(n):
                    ut[j] = u[j] + t * step[j]
                res_t = _residual(ut, bv, c, eps, kind, m, param, h, Ft, w, dphit)
                Gt = _merit(ut, bv, h, dt, eps, kind, m, param, v, y, off, two, cp, dp)
                if Gt <= G0 + _ARMIJO_C * t * slope or (
                        fabs(Gt - G0) <= _MERIT_RTOL * fabs(G0) and res_t < res):
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                break
            for j in range(n):
                u[j] = ut[j]
                F[j] = Ft[j]
                dphi[j] = dphit[j]
            res = res_t
    return out, res, it, bool(accepted and res <= tol)
