"""Numba switch.

Hot loops live in :mod:`zlab.kernels` in two flavours: an ``@njit`` loop
version and a vectorised numpy version.  ``ZLAB_NUMBA=0`` in the
environment (read once, at import) forces the numpy path everywhere; the
same happens automatically when numba is not importable.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("ZLAB_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True`` by default; identity without numba."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
