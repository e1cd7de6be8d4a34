# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same signatures and semantics as ``_fallback``.

Plain loops over contiguous buffers. Summation order differs from numpy's
BLAS calls, so results agree with the fallback to rounding, not bitwise.
"""

import numpy as np

from libc.math cimport exp, fabs, sqrt, isfinite, INFINITY

cdef int LOSS_NONE = 0
cdef int LOSS_LOGISTIC = 1
cdef int LOSS_QUADRATIC = 2


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _prox1(double s, double t, double bound) noexcept nogil:
    cdef double v
    if s > t:
        v = s - t
    elif s < -t:
        v = s + t
    else:
        v = 0.0
    if v > bound:
        return bound
    if v < -bound:
        return -bound
    return v


cdef void _structured_grad(
    int kind, const double[:, ::1] A, const double[::1] data,
    const double[:, ::1] E, const double[::1] r, double w, double mu,
    const double[::1] h, const double[::1] y, double[::1] out,
    double[::1] ubuf, double[::1] ebuf,
) noexcept nogil:
    cdef Py_ssize_t K = y.shape[0]
    cdef Py_ssize_t M = A.shape[0]
    cdef Py_ssize_t R = E.shape[0]
    cdef Py_ssize_t m, j
    cdef double acc, b
    for j in range(K):
        out[j] = mu * y[j] + h[j]
    if kind != LOSS_NONE:
        for m in range(M):
            acc = 0.0
            for j in range(K):
                acc = acc + A[m, j] * y[j]
            if kind == LOSS_LOGISTIC:
                b = data[m]
                ubuf[m] = -b * _sigmoid(-b * acc)
            else:
                ubuf[m] = 2.0 * (acc - data[m])
        for m in range(M):
            b = ubuf[m]
            for j in range(K):
                out[j] = out[j] + A[m, j] * b
    if w != 0.0:
        for m in range(R):
            acc = 0.0
            for j in range(K):
                acc = acc + E[m, j] * y[j]
            ebuf[m] = w * (acc - r[m])
        for m in range(R):
            b = ebuf[m]
            for j in range(K):
                out[j] = out[j] + E[m, j] * b


def prox_l1_box(s, double gamma, l1w, bound):
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=float)
    cdef const double[::1] wv = np.ascontiguousarray(np.broadcast_to(l1w, (sv.shape[0],)), dtype=float)
    cdef const double[::1] bv = np.ascontiguousarray(np.broadcast_to(bound, (sv.shape[0],)), dtype=float)
    out = np.empty(sv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t j
    for j in range(sv.shape[0]):
        ov[j] = _prox1(sv[j], wv[j] / gamma, bv[j])
    return out


def _check_kind(int kind):
    if kind not in (LOSS_NONE, LOSS_LOGISTIC, LOSS_QUADRATIC):
        raise ValueError(f"unknown loss kind {kind}")


def structured_gradient(int kind, A, data, E, r, double w, double mu, h, y):
    """Gradient of ``f(A y) + (w/2)||E y - r||^2 + (mu/2)||y||^2 + h^T y``."""
    _check_kind(kind)
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=float)
    cdef const double[:, ::1] Ev = np.ascontiguousarray(E, dtype=float)
    out = np.empty(len(y))
    _structured_grad(
        kind, Av, np.ascontiguousarray(data, dtype=float), Ev, np.ascontiguousarray(r, dtype=float),
        w, mu, np.ascontiguousarray(h, dtype=float), np.ascontiguousarray(y, dtype=float), out,
        np.empty(Av.shape[0]), np.empty(Ev.shape[0]),
    )
    return out


def fista_structured(int kind, A, data, E, r, double w, double mu, h, l1w, bound, start,
                     double step, double tol, long max_iter):
    """FISTA with momentum ``(l-1)/(l+2)`` and a constant step.

    Returns ``(y, iterations, pgr, converged)``.
    """
    _check_kind(kind)
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=float)
    cdef const double[::1] dv = np.ascontiguousarray(data, dtype=float)
    cdef const double[:, ::1] Ev = np.ascontiguousarray(E, dtype=float)
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=float)
    cdef const double[::1] hv = np.ascontiguousarray(h, dtype=float)
    cdef const double[::1] wv = np.ascontiguousarray(l1w, dtype=float)
    cdef const double[::1] bv = np.ascontiguousarray(bound, dtype=float)
    cdef Py_ssize_t K = len(start)
    y_arr = np.array(start, dtype=float)
    cdef double[::1] y = y_arr
    cdef double[::1] y_prev = np.array(start, dtype=float)
    cdef double[::1] z = np.array(start, dtype=float)
    cdef double[::1] g = np.empty(K)
    cdef double[::1] ubuf = np.empty(Av.shape[0])
    cdef double[::1] ebuf = np.empty(Ev.shape[0])
    cdef double scale = step * sqrt(<double>K)
    cdef double pgr = INFINITY
    cdef double d, ss, mom
    cdef long it
    cdef Py_ssize_t j
    cdef bint bad = False
    with nogil:
        for it in range(1, max_iter + 1):
            _structured_grad(kind, Av, dv, Ev, rv, w, mu, hv, z, g, ubuf, ebuf)
            for j in range(K):
                if not isfinite(g[j]):
                    bad = True
                    break
            if bad:
                break
            ss = 0.0
            for j in range(K):
                y[j] = _prox1(z[j] - step * g[j], wv[j] * step, bv[j])
                d = z[j] - y[j]
                ss = ss + d * d
            pgr = sqrt(ss) / scale
            if pgr < tol:
                break
            mom = (it - 1.0) / (it + 2.0)
            for j in range(K):
                z[j] = y[j] + mom * (y[j] - y_prev[j])
                y_prev[j] = y[j]
    if bad:
        raise FloatingPointError(f"non-finite gradient at inner iteration {it}")
    if pgr < tol:
        return y_arr, it, pgr, True
    return y_arr, max_iter, pgr, False


def ic_round(int kind, A3, data, Y, P, indptr, indices, double c, beta, l1w, bound):
    """One IC-ADMM round for all agents from the snapshot ``(Y, P)``."""
    _check_kind(kind)
    cdef const double[:, :, ::1] Av = np.ascontiguousarray(A3, dtype=float)
    cdef const double[:, ::1] Dv = np.ascontiguousarray(data, dtype=float)
    cdef const double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=float)
    cdef const double[:, ::1] Pv = np.ascontiguousarray(P, dtype=float)
    cdef const long[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const long[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] bt = np.ascontiguousarray(beta, dtype=float)
    cdef const double[:, ::1] Wv = np.ascontiguousarray(l1w, dtype=float)
    cdef const double[:, ::1] Bv = np.ascontiguousarray(bound, dtype=float)
    cdef Py_ssize_t N = Yv.shape[0]
    cdef Py_ssize_t K = Yv.shape[1]
    cdef Py_ssize_t M = Av.shape[1]
    Y_out = np.empty((N, K))
    P_out = np.empty((N, K))
    cdef double[:, ::1] Yn = Y_out
    cdef double[:, ::1] Pn = P_out
    cdef double[::1] nsum = np.empty(K)
    cdef double[::1] grad = np.empty(K)
    cdef double[::1] ubuf = np.empty(M)
    cdef Py_ssize_t i, j, m, t
    cdef long d
    cdef double acc, b, gamma, s
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(N):
            d = ip[i + 1] - ip[i]
            for j in range(K):
                nsum[j] = 0.0
            for t in range(ip[i], ip[i + 1]):
                for j in range(K):
                    nsum[j] = nsum[j] + Yv[ix[t], j]
            for j in range(K):
                Pn[i, j] = Pv[i, j] + c * (d * Yv[i, j] - nsum[j])
                grad[j] = 0.0
            for m in range(M):
                acc = 0.0
                for j in range(K):
                    acc = acc + Av[i, m, j] * Yv[i, j]
                if kind == LOSS_LOGISTIC:
                    b = Dv[i, m]
                    ubuf[m] = -b * _sigmoid(-b * acc)
                elif kind == LOSS_QUADRATIC:
                    ubuf[m] = 2.0 * (acc - Dv[i, m])
                else:
                    ubuf[m] = 0.0
            for m in range(M):
                b = ubuf[m]
                for j in range(K):
                    grad[j] = grad[j] + Av[i, m, j] * b
            gamma = bt[i] + 2.0 * c * d
            for j in range(K):
                if not isfinite(grad[j]):
                    bad = i
                    break
                s = (bt[i] * Yv[i, j] - grad[j] - Pn[i, j] + c * (d * Yv[i, j] + nsum[j])) / gamma
                Yn[i, j] = _prox1(s, Wv[i, j] / gamma, Bv[i, j])
            if bad >= 0:
                break
    if bad >= 0:
        raise FloatingPointError(f"non-finite gradient at agent {bad}")
    return Y_out, P_out
