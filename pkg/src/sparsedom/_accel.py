"""Backend switch for the hot loops.

Set ``SPARSEDOM_NO_NUMBA=1`` to force the pure-numpy kernels, e.g. to debug
or to compare against the compiled path. Numba is used otherwise when it
imports cleanly.
"""
import os

_FLAG = os.environ.get("SPARSEDOM_NO_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("numba disabled by SPARSEDOM_NO_NUMBA")
    import numba
    from numba import njit, prange

    # the bundled TBB is too old on some hosts; prefer OpenMP / workqueue
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def backend():
    return "numba" if HAVE_NUMBA else "numpy"


def set_workers(k):
    """Set the thread count used by parallel kernels; a no-op without numba."""
    if HAVE_NUMBA and k:
        numba.set_num_threads(max(1, min(int(k), numba.config.NUMBA_NUM_THREADS)))
