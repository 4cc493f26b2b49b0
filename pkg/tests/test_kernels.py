import os
import subprocess
import sys

import numpy as np
import pytest

from ccsmlp import kernels

needs_compiled = pytest.mark.skipif(kernels.compiled is None, reason="extension not built")


@needs_compiled
def test_matmul_bitwise_equal(rng):
    a, b = rng.standard_normal((7, 13)), rng.standard_normal((13, 5))
    assert kernels.compiled.matmul(a, b).tobytes() == kernels.python.matmul(a, b).tobytes()


@needs_compiled
@pytest.mark.parametrize("n", [1, 5, 16, 49])
def test_correlate_bitwise_equal(n, rng):
    u, w = rng.standard_normal((6, n)), rng.standard_normal((3, n))
    gidx = np.arange(6, dtype=np.intp) % 3
    c = kernels.compiled.correlate_rows(u, w, gidx)
    p = kernels.python.correlate_rows(u, w, gidx)
    assert c.tobytes() == p.tobytes()


@needs_compiled
@pytest.mark.parametrize("n", [1, 2, 8, 256])
@pytest.mark.parametrize("inverse", [False, True])
def test_pow2_fft_agree(n, inverse, rng):
    x = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
    a, b = x.copy(), x.copy()
    kernels.compiled.fft_pow2_rows(a, inverse)
    kernels.python.fft_pow2_rows(b, inverse)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * n)


def test_get():
    assert kernels.get("python") is kernels.python
    assert kernels.get() is kernels.active
    with pytest.raises(ValueError):
        kernels.get("gpu")


def test_env_forces_fallback():
    env = dict(os.environ, CCSMLP_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from ccsmlp import kernels; print(kernels.IMPLEMENTATION, kernels.available())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.split()[0] == "python"
    assert "compiled" not in out.stdout
