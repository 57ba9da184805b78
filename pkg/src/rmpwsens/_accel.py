"""Optional numba acceleration.

Set ``RMPWSENS_DISABLE_NUMBA=1`` to force the pure-numpy code paths. The flag
is read once, at import time.
"""
import os

_DISABLED = os.environ.get("RMPWSENS_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba  # noqa: F401
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False
    njit = None

USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


def jit(fn):
    """Compile ``fn`` with ``njit(cache=True)`` when numba is in use.

    Returns None otherwise so callers can fall back explicitly.
    """
    if not NUMBA_AVAILABLE:
        return None
    return njit(cache=True)(fn)
