"""Circulant channel-specific token mixing.

A length-``N`` generator ``w`` defines the ``N x N`` circulant matrix whose
entry ``(j, i)`` is ``w[(j - i) % N]``. Right-multiplying a ``C x N`` feature
matrix by it is a circular correlation along the token axis::

    out[:, i] = sum_j w[j] * u[:, (i + j) % N]

which is the normative semantics here (``backend="direct"``). The FFT backend
computes the same thing as ``Re(FFT[IFFT(u) * FFT(w)])``.

Channels are split into ``G`` groups by interleaving: channel ``c`` uses
generator row ``c % G``.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .numerics import ConfigurationError, DimensionError, as_tensor, fft, ifft

BACKENDS = ("direct", "fft")

# debug guard on the discarded imaginary part of the FFT backend
IMAG_RESIDUE_LIMIT = 1e-9


@dataclass(frozen=True)
class GroupLayout:
    channels: int
    groups: int

    def __post_init__(self):
        if self.groups < 1 or self.channels % self.groups:
            raise ConfigurationError(
                f"{self.groups} groups do not divide {self.channels} channels"
            )

    def group_of(self, c):
        return c % self.groups

    def assignment(self):
        return np.arange(self.channels, dtype=np.intp) % self.groups

    def members(self, g):
        return np.arange(g, self.channels, self.groups)


@dataclass(frozen=True, eq=False)
class CcsWeights:
    """G x N generator vectors, one circulant per channel group."""

    w: np.ndarray

    def __post_init__(self):
        w = as_tensor(self.w)
        if w.ndim != 2:
            raise DimensionError(f"CcsWeights needs a G x N array, got shape {w.shape}")
        object.__setattr__(self, "w", w)

    @property
    def groups(self):
        return self.w.shape[0]

    @property
    def tokens(self):
        return self.w.shape[1]

    @property
    def num_params(self):
        return self.w.size

    @classmethod
    def init(cls, groups, tokens, rng):
        bound = 1.0 / np.sqrt(tokens)
        return cls(rng.uniform(-bound, bound, size=(groups, tokens)))

    def layout(self, channels):
        return GroupLayout(channels, self.groups)


def materialize_circulant(w):
    """Dense circulant with ``w`` as its first column."""
    w = as_tensor(w)
    n = w.shape[0]
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return w[idx]


def _check_vector(u_hat, w):
    u_hat = as_tensor(u_hat)
    w = as_tensor(w)
    if u_hat.ndim != 2 or w.ndim != 1 or w.shape[0] != u_hat.shape[1]:
        raise DimensionError(
            f"generator of shape {w.shape} does not fit features of shape {u_hat.shape}"
        )
    return u_hat, w


def _correlate_rows_direct(rows, w, gidx, impl=None, plan=None):
    return kernels.get(impl).correlate_rows(
        as_tensor(rows), as_tensor(w), np.ascontiguousarray(gidx, dtype=np.intp)
    )


def _correlate_rows_fft(rows, w, gidx, impl=None, plan=None):
    spectrum = fft(w, plan, impl)[gidx]
    full = fft(ifft(rows, plan, impl) * spectrum, plan, impl)
    if __debug__:
        residue = np.abs(full.imag).max(initial=0.0)
        scale = 1.0 + np.abs(rows).max(initial=0.0) * np.abs(w).max(initial=0.0) * rows.shape[1]
        assert residue <= IMAG_RESIDUE_LIMIT * scale, f"imaginary residue {residue:.3e}"
    return np.ascontiguousarray(full.real)


_ROW_KERNELS = {"direct": _correlate_rows_direct, "fft": _correlate_rows_fft}


def correlate_rows(rows, w, gidx, backend="direct", impl=None, plan=None):
    """Correlate each row ``r`` of ``rows`` with generator ``w[gidx[r]]``.

    ``plan`` optionally supplies a prebuilt :class:`BluesteinPlan` for the FFT
    backend; by default the shared cached plan is used.
    """
    try:
        fn = _ROW_KERNELS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}") from None
    return fn(rows, w, gidx, impl, plan)


def circulant_correlate_direct(u_hat, w):
    u_hat, w = _check_vector(u_hat, w)
    return _correlate_rows_direct(u_hat, w[None, :], np.zeros(u_hat.shape[0], np.intp))


def circulant_correlate_fft(u_hat, w):
    u_hat, w = _check_vector(u_hat, w)
    return _correlate_rows_fft(u_hat, w[None, :], np.zeros(u_hat.shape[0], np.intp))


def _as_rows(x, weights):
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"expected a B x N x C tensor, got shape {x.shape}")
    b, n, c = x.shape
    if weights.tokens != n:
        raise DimensionError(f"weights are for {weights.tokens} tokens, input has {n}")
    gidx = np.tile(weights.layout(c).assignment(), b)
    # (B, N, C) -> (B*C, N): one row per (batch, channel)
    rows = np.ascontiguousarray(x.transpose(0, 2, 1).reshape(b * c, n))
    return rows, gidx


def _from_rows(rows, shape):
    b, n, c = shape
    return np.ascontiguousarray(rows.reshape(b, c, n).transpose(0, 2, 1))


def ccs_mix(x, weights, backend="direct", impl=None, plan=None):
    """Grouped circulant mixing of a ``B x N x C`` tensor along the token axis.

    No residual and no normalization; those belong to the enclosing block.
    """
    rows, gidx = _as_rows(x, weights)
    out = correlate_rows(rows, weights.w, gidx, backend, impl, plan)
    return _from_rows(out, np.shape(x))


def ccs_mix_adjoint(grad_out, x, weights, backend="direct", impl=None):
    """Reverse-mode derivatives of :func:`ccs_mix`.

    ``grad_x`` is the circular convolution of ``grad_out`` with ``w`` (the
    transposed circulant); ``grad_w[g, j]`` sums ``g[c, i] * x[c, (i + j) % N]``
    over batch, over channels of group ``g`` and over ``i``.
    """
    x = as_tensor(x)
    grad_out = as_tensor(grad_out)
    if grad_out.shape != x.shape:
        raise DimensionError(f"gradient shape {grad_out.shape} != input shape {x.shape}")
    rows_x, gidx = _as_rows(x, weights)
    rows_g, _ = _as_rows(grad_out, weights)
    n = weights.tokens
    # transpose of a circulant is the circulant of the index-reversed generator
    w_rev = np.ascontiguousarray(weights.w[:, (-np.arange(n)) % n])
    grad_rows = correlate_rows(rows_g, w_rev, gidx, backend, impl)
    # grad_w for row r is the correlation of x_r with generator g_r
    per_row = correlate_rows(rows_x, rows_g, np.arange(rows_g.shape[0]), backend, impl)
    grad_w = np.zeros_like(weights.w)
    np.add.at(grad_w, gidx, per_row)
    return _from_rows(grad_rows, x.shape), grad_w
