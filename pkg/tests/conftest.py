import numpy as np
import pytest

from ccsmlp import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=kernels.available())
def impl(request):
    """Run a test once per importable kernel set."""
    return request.param
