# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled merged-CDF Wasserstein-2 kernels on a shared 1-D support."""
import numpy as np
from libc.math cimport fabs, sqrt

# cumulative masses closer than this are treated as one event
DEF TIE = 1e-12

cdef double _w2sq(const double[::1] a, const double[::1] b, const double[::1] x) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i = 0, j = 0
    cdef double ca = a[0], cb = b[0], prev = 0.0, acc = 0.0, u, d
    while True:
        u = ca if ca <= cb else cb
        d = x[i] - x[j]
        acc += (u - prev) * d * d
        if fabs(ca - cb) <= TIE:
            prev = cb if ca <= cb else ca
            i += 1
            j += 1
            if i == n or j == n:
                break
            ca += a[i]
            cb += b[j]
            continue
        prev = u
        if ca <= cb:
            i += 1
            if i == n:
                break
            ca += a[i]
        else:
            j += 1
            if j == n:
                break
            cb += b[j]
    return acc


def w2(const double[::1] a, const double[::1] b, const double[::1] x):
    return sqrt(_w2sq(a, b, x))


def w2_rows(const double[:, ::1] a, const double[:, ::1] b, const double[::1] x):
    cdef Py_ssize_t r, n = a.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for r in range(n):
            o[r] = sqrt(_w2sq(a[r], b[r], x))
    return out


def w2_cross(const double[:, ::1] a, const double[:, ::1] b, const double[::1] x):
    cdef Py_ssize_t r, s, na = a.shape[0], nb = b.shape[0]
    out = np.empty((na, nb))
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(na):
            for s in range(nb):
                o[r, s] = sqrt(_w2sq(a[r], b[s], x))
    return out
