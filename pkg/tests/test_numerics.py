import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccsmlp import numerics as nm


# Hand-computed transforms (forward sign -2*pi*i*jk/N, unnormalized).
def test_dft_of_ramp_length_4():
    got = nm.dft_naive([1, 2, 3, 4])
    np.testing.assert_allclose(got, [10, -2 + 2j, -2, -2 - 2j], atol=1e-13)


def test_dft_of_shifted_impulse_length_3():
    w = np.exp(-2j * np.pi / 3)
    np.testing.assert_allclose(nm.dft_naive([0, 1, 0]), [1, w, w * w], atol=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 6, 7, 8, 12, 49, 64, 100, 196, 256])
def test_fft_matches_naive(n, rng, impl):
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert np.abs(nm.fft(x, impl=impl) - nm.dft_naive(x)).max() < 1e-10


def test_fft_of_constant_is_impulse():
    got = nm.fft(np.ones(7))
    expect = np.zeros(7, complex)
    expect[0] = 7
    np.testing.assert_allclose(got, expect, atol=1e-12)


@pytest.mark.parametrize("n", [1, 7, 16, 49, 196])
def test_roundtrip(n, rng, impl):
    x = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
    assert np.abs(nm.ifft(nm.fft(x, impl=impl), impl=impl) - x).max() < 1e-12


def test_batched_rows_are_independent(rng):
    x = rng.standard_normal((4, 2, 49))
    batched = nm.fft(x)
    for idx in np.ndindex(4, 2):
        np.testing.assert_allclose(batched[idx], nm.fft(x[idx]), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 80), a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**32 - 1))
def test_linearity_and_parseval(n, a, b, seed):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal(n), r.standard_normal(n)
    fx, fy = nm.fft(x), nm.fft(y)
    assert np.abs(nm.fft(a * x + b * y) - (a * fx + b * fy)).max() < 1e-9
    assert np.isclose(np.sum(np.abs(fx) ** 2) / n, np.sum(x * x), rtol=1e-10, atol=1e-12)


def test_plan_cache_and_immutability():
    p = nm.get_plan(49)
    assert nm.get_plan(49) is p
    assert p.m >= 2 * 49 - 1 and p.m & (p.m - 1) == 0
    with pytest.raises(ValueError):
        p.chirp[0] = 0


def test_plan_length_mismatch():
    with pytest.raises(nm.DimensionError):
        nm.fft(np.ones(7), plan=nm.get_plan(9))


def test_empty_transform_rejected():
    with pytest.raises(nm.DimensionError):
        nm.fft(np.ones(0))


def test_matmul_known_values(impl):
    got = nm.matmul([[1, 2], [3, 4]], [[5, 6], [7, 8]], impl=impl)
    np.testing.assert_array_equal(got, [[19, 22], [43, 50]])


def test_matmul_vector_and_batch(rng, impl):
    b = rng.standard_normal((4, 3))
    v = rng.standard_normal(4)
    np.testing.assert_allclose(nm.matmul(v, b, impl=impl), v @ b, rtol=1e-13)
    a = rng.standard_normal((2, 5, 4))
    got = nm.matmul(a, b, impl=impl)
    assert got.shape == (2, 5, 3)
    np.testing.assert_allclose(got, a @ b, rtol=1e-12, atol=1e-13)


def test_matmul_shape_error():
    with pytest.raises(nm.DimensionError):
        nm.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_equals_triple_loop_exactly(rng, impl):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    ref = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                ref[i, j] += a[i, k] * b[k, j]
    assert nm.matmul(a, b, impl=impl).tobytes() == ref.tobytes()


def test_parseval_length_7(rng):
    x = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    assert abs(np.sum(np.abs(x) ** 2) - np.sum(np.abs(nm.fft(x)) ** 2) / 7) < 1e-12


def test_ifft_of_hermitian_spectrum_is_real(rng):
    spectrum = nm.dft_naive(rng.standard_normal(49))
    assert np.abs(nm.ifft(spectrum).imag).max() <= 1e-12
