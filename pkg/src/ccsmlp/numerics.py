"""Dense tensor primitives and an arbitrary-length FFT.

Tensors are plain ``float64`` numpy arrays; complex buffers are ``complex128``
arrays. Transforms act along the last axis, so a 2-D array is a batch of rows.
Forward transforms are unnormalized; the inverse carries the ``1/N``.
"""

from functools import lru_cache

import numpy as np

from . import kernels


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ConfigurationError(ValueError):
    """A configuration value violates a structural constraint."""


def as_tensor(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def as_complex(x):
    return np.ascontiguousarray(x, dtype=np.complex128)


def matmul(a, b, impl=None):
    """Matrix product with a fixed row-major accumulation order.

    ``a`` may be a vector or carry leading batch axes, ``(..., m, k) @ (k, n)``.
    Each output entry is summed over ``k`` in ascending order starting from
    zero, so the result is reproducible bit for bit across both kernel sets.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    lead = a.shape[:-1]
    out = kernels.get(impl).matmul(a.reshape(-1, a.shape[-1]), b)
    return out.reshape(lead + (b.shape[1],))


def dft_naive(x):
    """O(N^2) reference transform along the last axis; test oracle only."""
    x = as_complex(x)
    n = x.shape[-1]
    if n < 1:
        raise DimensionError("dft_naive needs at least one sample")
    jk = np.outer(np.arange(n), np.arange(n)) % n
    table = np.exp(-2j * np.pi * np.arange(n) / n)
    out = np.empty_like(x)
    for k in range(n):
        out[..., k] = (x * table[jk[k]]).sum(axis=-1)
    return out


def _is_pow2(n):
    return n & (n - 1) == 0


def _pow2_transform(x, inverse, impl):
    lead = x.shape[:-1]
    rows = np.array(x.reshape(-1, x.shape[-1]), dtype=np.complex128, order="C")
    kernels.get(impl).fft_pow2_rows(rows, inverse)
    return rows.reshape(lead + (x.shape[-1],))


class BluesteinPlan:
    """Chirp tables for one transform length.

    The length-``n`` DFT is rewritten as a linear convolution of chirp-modulated
    sequences, evaluated with power-of-two transforms of length
    ``m >= 2n - 1``. Instances are read-only after construction.
    """

    def __init__(self, n, impl=None):
        if n < 1:
            raise DimensionError("transform length must be positive")
        self.n = n
        self.m = 1 << max(0, (2 * n - 2).bit_length())
        k = np.arange(n)
        # k^2 mod 2n keeps the chirp phase exact for large k
        self.chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
        b = np.zeros(self.m, dtype=np.complex128)
        b[:n] = np.conj(self.chirp)
        b[self.m - n + 1 :] = np.conj(self.chirp[1:])[::-1]
        self.kernel_spectrum = _pow2_transform(b, False, impl)
        for arr in (self.chirp, self.kernel_spectrum):
            arr.flags.writeable = False

    def forward(self, x, impl=None):
        lead = x.shape[:-1]
        a = np.zeros(lead + (self.m,), dtype=np.complex128)
        a[..., : self.n] = x * self.chirp
        spec = _pow2_transform(a, False, impl) * self.kernel_spectrum
        conv = _pow2_transform(spec, True, impl)[..., : self.n] / self.m
        return conv * self.chirp


@lru_cache(maxsize=64)
def get_plan(n):
    """Shared plan for length ``n`` (cached; plans are immutable)."""
    return BluesteinPlan(n)


def fft(x, plan=None, impl=None):
    """Forward DFT of any length along the last axis, O(N log N)."""
    x = as_complex(x)
    n = x.shape[-1]
    if n < 1:
        raise DimensionError("fft needs at least one sample")
    if _is_pow2(n):
        return _pow2_transform(x, False, impl)
    if plan is None:
        plan = get_plan(n)
    elif plan.n != n:
        raise DimensionError(f"plan is for length {plan.n}, input has {n}")
    return plan.forward(x, impl)


def ifft(x, plan=None, impl=None):
    """Inverse DFT including the 1/N factor."""
    x = as_complex(x)
    n = x.shape[-1]
    if n < 1:
        raise DimensionError("ifft needs at least one sample")
    if _is_pow2(n):
        return _pow2_transform(x, True, impl) / n
    return np.conj(fft(np.conj(x), plan, impl)) / n
