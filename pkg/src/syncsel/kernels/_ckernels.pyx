# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors ``_pykernels`` exactly; see that module for docs."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt

cnp.import_array()

cdef double GOLDEN = 0.6180339887498949


def smp_pair_slack(const double[:, ::1] U, const double[:, ::1] V, double gamma, double modulus):
    cdef Py_ssize_t n = U.shape[0], C = U.shape[1], i, j
    cdef double mu, mv, d, dist
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    for i in range(n):
        mu = U[i, 0]
        mv = V[i, 0]
        dist = fabs(U[i, 0] - V[i, 0])
        for j in range(1, C):
            if U[i, j] > mu:
                mu = U[i, j]
            if V[i, j] > mv:
                mv = V[i, j]
            d = fabs(U[i, j] - V[i, j])
            if d > dist:
                dist = d
        res[i] = fabs(pow(mu, gamma) - pow(mv, gamma)) - modulus * dist
    return out


cdef double SILVER = 0.41421356237309503


cdef inline void _jmatvec(const double[:, ::1] P, Py_ssize_t r, double[::1] v, double[::1] w, Py_ssize_t C) noexcept nogil:
    cdef Py_ssize_t j
    cdef double pv = 0.0
    for j in range(C):
        pv += P[r, j] * v[j]
    for j in range(C):
        w[j] = P[r, j] * v[j] - P[r, j] * pv


cdef inline double _dot(double[::1] a, double[::1] b, Py_ssize_t C) noexcept nogil:
    cdef Py_ssize_t j
    cdef double s = 0.0
    for j in range(C):
        s += a[j] * b[j]
    return s


cdef inline double _orth_into(double[::1] q1, double[::1] src, double[::1] dst, Py_ssize_t C) noexcept nogil:
    # dst <- src - (q1.src) q1, returns norm of dst
    cdef Py_ssize_t j
    cdef double c = _dot(q1, src, C)
    for j in range(C):
        dst[j] = src[j] - c * q1[j]
    return sqrt(_dot(dst, dst, C))


def softmax_jacobian_norms(const double[:, ::1] P, double tol, int max_iter):
    cdef Py_ssize_t n = P.shape[0], C = P.shape[1], r, j
    cdef int it
    cdef double a, b, d, lam, lam_prev, n1, n2, s
    norms_arr = np.empty(n, dtype=np.float64)
    iters_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] norms = norms_arr
    cdef long long[::1] iters = iters_arr
    cdef double[::1] v1 = np.empty(C), v2 = np.empty(C)
    cdef double[::1] w1 = np.empty(C), w2 = np.empty(C), tmp = np.empty(C)
    for r in range(n):
        for j in range(C):
            v1[j] = ((j + 1) * GOLDEN) % 1.0 - 0.5
            v2[j] = ((j + 1) * SILVER) % 1.0 - 0.5
        s = sqrt(_dot(v1, v1, C))
        for j in range(C):
            v1[j] /= s
        s = _orth_into(v1, v2, tmp, C)
        for j in range(C):
            v2[j] = tmp[j] / s
        lam_prev = -1.0
        lam = 0.0
        iters[r] = -1
        for it in range(1, max_iter + 1):
            _jmatvec(P, r, v1, w1, C)
            _jmatvec(P, r, v2, w2, C)
            a = _dot(v1, w1, C)
            b = _dot(v1, w2, C)
            d = _dot(v2, w2, C)
            lam = 0.5 * (a + d) + sqrt(0.25 * (a - d) * (a - d) + b * b)
            n1 = sqrt(_dot(w1, w1, C))
            if n1 == 0.0:
                n1 = sqrt(_dot(w2, w2, C))
                if n1 == 0.0:
                    lam = 0.0
                    iters[r] = it
                    break
                for j in range(C):
                    w1[j] = w2[j]
            for j in range(C):
                tmp[j] = w1[j] / n1
            n2 = _orth_into(tmp, w2, w1, C)
            if n2 <= 1e-12 * n1:
                n2 = _orth_into(tmp, v2, w1, C)
                if n2 <= 1e-12:
                    n2 = _orth_into(tmp, v1, w1, C)
            for j in range(C):
                v1[j] = tmp[j]
                v2[j] = w1[j] / n2
            if fabs(lam - lam_prev) <= tol:
                iters[r] = it
                break
            lam_prev = lam
        norms[r] = lam
    return norms_arr, iters_arr
