"""Builds the optional compiled kernels; the package falls back to numpy without them."""

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CCSMLP_NO_EXT", "") in ("", "0"):
    try:
        from Cython.Build import cythonize
    except ImportError:  # no Cython: pure-Python install
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "ccsmlp._ckernels",
                    ["src/ccsmlp/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no FMA contraction: keeps summation bit-identical to the fallback
                    extra_compile_args=["-O3", "-ffp-contract=off", "-fcx-limited-range"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
