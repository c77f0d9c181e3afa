"""Numba switch.

Compiled kernels are used when numba imports and ``KINEDICT_DISABLE_JIT`` is
unset (or "0"). Setting it to "1" routes every kernel through its pure-numpy
twin, which is useful for debugging and for the kernel benchmark.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

JIT_DISABLED = os.environ.get("KINEDICT_DISABLE_JIT", "0").strip().lower() not in ("", "0", "false", "no")
USE_JIT = HAVE_NUMBA and not JIT_DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def thread_cap(default=1):
    """Worker count from ``KINEDICT_THREADS`` (always at least 1)."""
    raw = os.environ.get("KINEDICT_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default
