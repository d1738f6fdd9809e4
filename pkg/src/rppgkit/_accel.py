"""Optional numba acceleration.

Set ``RPPGKIT_DISABLE_NUMBA=1`` to force the pure-numpy code paths (useful for
debugging and for benchmarking the two backends against each other).
"""
import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def numba_enabled():
    """True when the compiled kernels should be used."""
    flag = os.environ.get("RPPGKIT_DISABLE_NUMBA", "").strip().lower()
    return HAVE_NUMBA and flag not in ("1", "true", "yes", "on")


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func
