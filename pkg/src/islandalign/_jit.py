"""Numba switch.

Set ``ISLANDALIGN_NUMBA=0`` to run every kernel on its pure-numpy path.
When numba cannot be imported the numpy path is used regardless.
"""
import os

_FLAG = os.environ.get("ISLANDALIGN_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("0", "false", "no", "off")


def njit(func):
    """``numba.njit(cache=True)`` when numba is available, else identity."""
    if not NUMBA_AVAILABLE:
        return func
    return numba.njit(cache=True)(func)
