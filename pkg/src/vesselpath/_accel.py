"""Backend selection for the hot numeric kernels.

The nearest-neighbour kernels exist twice: a numba ``@njit`` version and a
pure-numpy version. ``VESSELPATH_DISABLE_NUMBA=1`` forces numpy everywhere;
``VESSELPATH_THREADS`` caps the numba thread pool.
"""
from __future__ import annotations

import os
import warnings

DISABLE_ENV = "VESSELPATH_DISABLE_NUMBA"
THREADS_ENV = "VESSELPATH_THREADS"

BACKENDS = ("auto", "numba", "numpy")

try:
    with warnings.catch_warnings():
        # numba warns at import when the optional TBB threading layer is stale
        warnings.simplefilter("ignore")
        import numba

    # prefer layers that need no extra runtime; TBB is tried last
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def numba_disabled_by_env() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes", "on")


def resolve_backend(backend: str = "auto") -> str:
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numpy":
        return "numpy"
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        return "numba"
    if HAVE_NUMBA and not numba_disabled_by_env():
        return "numba"
    return "numpy"


def default_threads() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


def set_threads(n: int | None) -> None:
    """Apply a thread count to the numba pool (no-op for numpy)."""
    if n is None:
        n = default_threads()
    if n is None or not HAVE_NUMBA:
        return
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
