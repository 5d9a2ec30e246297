# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: aggregate-shortfall scans, simplex basis-inverse
updates, and prefix-rule satisfaction. Mirrors evpool._kernels_py."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def aggregate_shortfall(double[:, ::1] demands, double[::1] personal):
    """Column sums of (demands[i, j] - personal[i])_+ ; returns (M,)."""
    cdef Py_ssize_t n = demands.shape[0]
    cdef Py_ssize_t m = demands.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(m, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double p, d
    for i in range(n):
        p = personal[i]
        for j in range(m):
            d = demands[i, j] - p
            if d > 0.0:
                ov[j] += d
    return out


def eta_update(double[:, ::1] binv, double[::1] w, Py_ssize_t r):
    """Product-form basis-inverse update after a simplex pivot, in place."""
    cdef Py_ssize_t m = binv.shape[0]
    cdef double piv = w[r]
    cdef Py_ssize_t k, j
    cdef double f
    for j in range(m):
        binv[r, j] /= piv
    for k in range(m):
        if k == r:
            continue
        f = w[k]
        if f != 0.0:
            for j in range(m):
                binv[k, j] -= f * binv[r, j]
    return None


def prefix_satisfied(double[:, ::1] shortfalls, long long[:, ::1] orders,
                     double pool, double tol):
    """Satisfaction matrix for the prefix allocation rules; returns (N, M) bool.

    Per column, serve drivers in the given order; each receives its full
    shortfall iff the inclusive running total stays <= pool + tol. Satisfied
    means served in full or no shortfall (<= tol) at all.
    """
    cdef Py_ssize_t n = shortfalls.shape[0]
    cdef Py_ssize_t m = shortfalls.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.zeros((n, m), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] ov = out
    cdef Py_ssize_t j, t, i
    cdef double running, sf, cap = pool + tol
    # 1e-12-relative slack: tolerate summation-order round-off when the
    # pool was sized from these same shortfalls
    for j in range(m):
        running = 0.0
        for t in range(n):
            i = <Py_ssize_t> orders[j, t]
            sf = shortfalls[i, j]
            running += sf
            if running <= cap + 1e-12 * running or sf <= tol:
                ov[i, j] = 1
    return out.view(np.bool_)
