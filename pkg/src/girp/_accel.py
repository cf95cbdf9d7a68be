"""JIT switch for the numeric kernels.

Kernels are compiled with numba unless ``GIRP_DISABLE_NUMBA`` is set to a
truthy value, in which case they run as plain Python/numpy.  The flag is
read once at import time.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency
    numba = None

_flag = os.environ.get("GIRP_DISABLE_NUMBA", "").strip().lower()
NUMBA_ENABLED = numba is not None and _flag in ("", "0", "false", "no", "off")


def jit(fn):
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def pure(fn):
    """Return the uncompiled Python function behind a kernel."""
    return getattr(fn, "py_func", fn)
