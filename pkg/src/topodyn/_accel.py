"""Numba switch.

Set ``TOPODYN_DISABLE_NUMBA=1`` to run every hot kernel through its
pure-numpy twin instead of the compiled one.  Both paths are always
importable so they can be compared side by side.
"""
import os

_FALSEY = {"", "0", "false", "no", "off"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("TOPODYN_DISABLE_NUMBA", "").strip().lower() in _FALSEY


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)
