"""Numba dispatch layer.

Hot numeric kernels in this package come in two flavours: a numba ``@njit``
version and a pure-numpy/python fallback. Selection happens once at import
time. Set the environment variable ``CAPSTATE_NUMBA=0`` to force the fallback
path (useful for debugging and for the numba-vs-numpy benchmark).
"""

import os

_flag = os.environ.get("CAPSTATE_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

if _want_numba:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        """No-op stand-in for numba.njit when the fallback path is active."""
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def jit_kernel(fn):
    """Compile ``fn`` with njit(cache=True) when numba is active, else return as-is."""
    if NUMBA_ENABLED:
        return njit(cache=True)(fn)
    return fn
