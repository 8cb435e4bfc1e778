"""Optional numba acceleration.

Set ``ATCIRCLE_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
"""
import os

DISABLED = os.environ.get("ATCIRCLE_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False
    _njit = None


def njit(*args, **kwargs):
    """``numba.njit`` when available and enabled, identity otherwise."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrapper(func):
        return func

    return wrapper
