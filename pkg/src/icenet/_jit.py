"""Numba switch.

Set ``ICENET_DISABLE_NUMBA=1`` to run every kernel on its pure-numpy path.
The flag is read once at import time.
"""
import os

_DISABLED = os.environ.get("ICENET_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED

JIT_OPTIONS = {"nogil": True, "cache": True}


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it untouched.

    fastmath stays off: results must match the numpy path to ~1e-12.
    """
    if not HAVE_NUMBA:
        return func
    return _njit(**JIT_OPTIONS)(func)
