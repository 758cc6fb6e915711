"""Numba switch.

Set ``LORFLOW_NUMBA=0`` to force the pure-numpy kernels; by default the
numba kernels are used whenever numba imports.  ``LORFLOW_THREADS`` caps the
numba worker pool.
"""

import os
import warnings

_FALSY = {"0", "false", "no", "off"}

# an old system TBB makes numba complain once per process; it falls back fine
warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("LORFLOW_NUMBA", "1").strip().lower() not in _FALSY


def _configure_threads():
    cap = os.environ.get("LORFLOW_THREADS")
    if not (HAVE_NUMBA and cap):
        return
    try:
        n = int(cap)
    except ValueError:
        return
    if n >= 1:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


_configure_threads()


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    Kernels are always compiled when numba exists so that both code paths can
    be tested and benchmarked side by side; ``USE_NUMBA`` only decides which
    one the public wrappers dispatch to.
    """
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range
