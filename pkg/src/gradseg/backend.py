"""Kernel backend selection.

The hot numeric kernels (convolutions, pooling) exist twice: a pure-numpy
implementation built on im2col / einsum, and a numba @njit implementation
with explicit loops. The active backend is chosen once at import time from
the GS_BACKEND environment variable ("numba" or "numpy"); the default is
numba when importable, numpy otherwise. Both backends produce results that
agree to floating-point roundoff and are deterministic run-to-run.
"""

import os

from . import kernels_numpy

_requested = os.environ.get("GS_BACKEND", "").strip().lower()

if _requested not in ("", "numpy", "numba"):
    raise RuntimeError(f"GS_BACKEND must be 'numpy' or 'numba', got {_requested!r}")

if _requested == "numpy":
    kernels = kernels_numpy
    BACKEND = "numpy"
else:
    try:
        from . import kernels_numba

        kernels = kernels_numba
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        kernels = kernels_numpy
        BACKEND = "numpy"


def get_kernels(name=None):
    """Return a kernel module by name, or the active backend's module."""
    if name is None:
        return kernels
    if name == "numpy":
        return kernels_numpy
    if name == "numba":
        from . import kernels_numba

        return kernels_numba
    raise ValueError(f"unknown backend {name!r}")
