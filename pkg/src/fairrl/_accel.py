"""Numba switch.

Set ``FAIRRL_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when numba
is importable. The flag is read once at import time.
"""

import os
import warnings

DISABLED = os.environ.get("FAIRRL_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba as _numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED

if DISABLED is False and not HAVE_NUMBA:  # pragma: no cover
    warnings.warn("numba not importable; falling back to numpy kernels")


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged.

    The uncompiled function stays reachable as ``.py_func`` either way so tests
    can compare compiled and interpreted results.
    """
    if not HAVE_NUMBA:
        func.py_func = func
        return func
    return _numba.njit(cache=True)(func)


def backend():
    return "numba" if USE_NUMBA else "numpy"
