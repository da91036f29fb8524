"""Numba acceleration switch.

Hot kernels exist in two flavours: a numba @njit loop version and a
vectorized pure-numpy version. Selection happens once at import time via
the MAPFUSE_NUMBA environment variable:

    MAPFUSE_NUMBA=1 (default)  use numba when importable
    MAPFUSE_NUMBA=0            force the pure-numpy fallback

Modules query NUMBA_ENABLED to pick an implementation. Kernels never use
fastmath so both paths produce bit-identical results.
"""

import os

_flag = os.environ.get("MAPFUSE_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "off", "false", "no")

NUMBA_ENABLED = False
if _want_numba:
    try:
        from numba import njit, prange

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        """No-op stand-in so @njit-decorated helpers stay importable."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap

    prange = range


def set_threads(n):
    """Cap numba's worker count; silently ignored on the numpy path."""
    if NUMBA_ENABLED and n is not None and n > 0:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
