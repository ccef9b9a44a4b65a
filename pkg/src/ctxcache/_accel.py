"""Optional numba acceleration.

Set ``CTXCACHE_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when
numba is importable.
"""
import os

_FLAG = os.environ.get("CTXCACHE_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as _numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """``numba.njit(cache=True)`` when numba is installed, else identity."""
    if not HAS_NUMBA:
        return func
    return _numba.njit(cache=True, fastmath=False)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
