# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: squared-distance and shifted-power tables."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()


cdef inline double _neg_pow(double s, double p) noexcept nogil:
    """s ** -p; half-integer p (the only kind the bubbles need) avoids libm pow."""
    cdef double tp = 2.0 * p
    cdef long q
    cdef double r = 1.0, b = s
    if tp < 0.0 or tp > 64.0 or tp != <double>(<long>tp):
        return pow(s, -p)
    q = <long>tp
    if q & 1:
        r = sqrt(s)
    q >>= 1
    while q:
        if q & 1:
            r *= b
        b *= b
        q >>= 1
    return 1.0 / r


def sqdist_table(const double[:, ::1] x, const double[:, ::1] c):
    cdef Py_ssize_t n = x.shape[0], k = c.shape[0], dim = x.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double acc, diff
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(k):
                acc = 0.0
                for l in range(dim):
                    diff = x[i, l] - c[j, l]
                    acc = acc + diff * diff
                o[i, j] = acc
    return out


def power_table(const double[:, ::1] x, const double[:, ::1] c,
                const double[::1] offsets, const double[::1] powers):
    """out[i, j] = (offsets[j] + |x_i - c_j|^2) ** (-powers[j])."""
    cdef Py_ssize_t n = x.shape[0], k = c.shape[0], dim = x.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double acc, diff
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(k):
                acc = 0.0
                for l in range(dim):
                    diff = x[i, l] - c[j, l]
                    acc = acc + diff * diff
                o[i, j] = _neg_pow(offsets[j] + acc, powers[j])
    return out


def power_sum(const double[:, ::1] x, const double[:, ::1] c,
              const double[::1] offsets, const double[::1] powers,
              const double[::1] coef):
    """out[i] = sum_j coef[j] * (offsets[j] + |x_i - c_j|^2) ** (-powers[j])."""
    cdef Py_ssize_t n = x.shape[0], k = c.shape[0], dim = x.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double acc, diff, tot
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            tot = 0.0
            for j in range(k):
                acc = 0.0
                for l in range(dim):
                    diff = x[i, l] - c[j, l]
                    acc = acc + diff * diff
                tot = tot + coef[j] * _neg_pow(offsets[j] + acc, powers[j])
            o[i] = tot
    return out
