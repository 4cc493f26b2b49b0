"""Kernel selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``CCSMLP_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

python = _pykernels

if os.environ.get("CCSMLP_PURE_PYTHON", "") not in ("", "0"):
    compiled = None
else:
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

active = compiled if compiled is not None else python
IMPLEMENTATION = active.NAME


def available():
    """Names of the kernel sets importable in this process."""
    return [k.NAME for k in (compiled, python) if k is not None]


def get(name=None):
    if name is None:
        return active
    if name == "python":
        return python
    if name == "compiled":
        if compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        return compiled
    raise ValueError(f"unknown kernel set {name!r}")
