"""Numba switch.

Set ``MSGRAPH_DISABLE_NUMBA=1`` before importing :mod:`msgraph` to run every
kernel through the vectorized numpy path instead.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

DISABLED = os.environ.get("MSGRAPH_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def maybe_njit(func):
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func
