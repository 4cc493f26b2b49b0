"""Pure-Python (numpy) fallback for the compiled kernels.

Every function here has the same signature, semantics and summation order as
its twin in ``_ckernels.pyx``; the two are checked against each other in the
test suite.
"""

import numpy as np

NAME = "python"


def matmul(a, b):
    m, k = a.shape
    out = np.zeros((m, b.shape[1]), dtype=np.float64)
    for p in range(k):
        out += a[:, p : p + 1] * b[p]
    return out


def correlate_rows(u, w, gidx):
    """out[r, i] = sum_j w[gidx[r], j] * u[r, (i + j) % n]."""
    n = u.shape[1]
    wr = w[gidx]
    out = np.zeros_like(u)
    for j in range(n):
        out += wr[:, j : j + 1] * np.roll(u, -j, axis=1)
    return out


def _bit_reverse_perm(m):
    bits = m.bit_length() - 1
    idx = np.arange(m)
    rev = np.zeros(m, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_pow2_rows(a, inverse):
    """Unnormalized in-place radix-2 transform of every row; row length must be 2**k."""
    rows, m = a.shape
    if m <= 1:
        return
    sign = 1.0 if inverse else -1.0
    k = np.arange(m // 2)
    ang = 2.0 * np.pi * k / m
    tw = np.cos(ang) + 1j * (sign * np.sin(ang))
    a[:] = a[:, _bit_reverse_perm(m)]
    size = 2
    while size <= m:
        half = size // 2
        step = m // size
        blocks = a.reshape(rows, m // size, size)
        t = tw[: half * step : step] * blocks[:, :, half:]
        u = blocks[:, :, :half].copy()
        blocks[:, :, :half] = u + t
        blocks[:, :, half:] = u - t
        size *= 2
