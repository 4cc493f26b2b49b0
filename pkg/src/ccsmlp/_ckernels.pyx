# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Mirrors ``_pykernels`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()

NAME = "compiled"


def matmul(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    cdef Py_ssize_t i, p, j
    cdef double aip
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(m):
            for p in range(k):
                aip = a[i, p]
                for j in range(n):
                    o[i, j] += aip * b[p, j]
    return out


def correlate_rows(double[:, ::1] u, double[:, ::1] w, cnp.intp_t[::1] gidx):
    """out[r, i] = sum_j w[gidx[r], j] * u[r, (i + j) % n]."""
    cdef Py_ssize_t rows = u.shape[0], n = u.shape[1]
    cdef Py_ssize_t r, i, j, lim
    cdef double acc
    cdef double* ur
    cdef double* wr
    out = np.empty((rows, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(rows):
            ur = &u[r, 0]
            wr = &w[gidx[r], 0]
            for i in range(n):
                acc = 0.0
                lim = n - i
                # j < n - i reads u[i + j]; the rest wraps to u[i + j - n]
                for j in range(lim):
                    acc += wr[j] * ur[i + j]
                for j in range(lim, n):
                    acc += wr[j] * ur[i + j - n]
                o[r, i] = acc
    return out


cdef void _bit_reverse(double complex* a, Py_ssize_t m) nogil:
    cdef Py_ssize_t i, j = 0, bit
    cdef double complex t
    for i in range(1, m):
        bit = m >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            t = a[i]
            a[i] = a[j]
            a[j] = t


def fft_pow2_rows(cnp.complex128_t[:, ::1] a, bint inverse):
    """Unnormalized in-place radix-2 transform of every row; row length must be 2**k."""
    cdef Py_ssize_t rows = a.shape[0], m = a.shape[1]
    cdef Py_ssize_t r, size, half, step, start, k
    cdef double sign = 1.0 if inverse else -1.0
    cdef double complex t, u
    cdef double complex* row
    if m <= 1:
        return
    tw_arr = np.empty(m // 2, dtype=np.complex128)
    cdef cnp.complex128_t[::1] tw = tw_arr
    with nogil:
        for k in range(m // 2):
            tw[k] = cos(2.0 * M_PI * k / m) + 1j * (sign * sin(2.0 * M_PI * k / m))
        for r in range(rows):
            row = <double complex*> &a[r, 0]
            _bit_reverse(row, m)
            size = 2
            while size <= m:
                half = size >> 1
                step = m // size
                start = 0
                while start < m:
                    for k in range(half):
                        t = tw[k * step] * row[start + k + half]
                        u = row[start + k]
                        row[start + k] = u + t
                        row[start + k + half] = u - t
                    start += size
                size <<= 1
