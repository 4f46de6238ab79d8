"""Backend selection for the hot kernels.

Every kernel in :mod:`mmseeker.kernels` has a numba-compiled path and a
pure-numpy path. The numba path is used when numba imports and the
environment variable ``MMSEEKER_NUMBA`` is not set to ``0``/``false``/``off``.
The flag is read once, at import time.
"""
from __future__ import annotations

import logging
import os

logger = logging.getLogger(__name__)

_FALSY = {"0", "false", "off", "no"}

try:
    import numba

    # TBB in some images is too old for numba; workqueue is always present.
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("MMSEEKER_NUMBA", "1").strip().lower() not in _FALSY


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Functions decorated here are always compiled when numba exists, even if
    ``USE_NUMBA`` is off; the dispatch layer decides which path runs.
    """
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


if HAS_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n: int | None) -> int:
    """Cap worker threads for numba kernels; returns the effective count."""
    if n is None:
        env = os.environ.get("MMSEEKER_THREADS")
        n = int(env) if env else None
    if not HAS_NUMBA:
        return 1
    limit = numba.config.NUMBA_NUM_THREADS
    if n is None:
        n = limit
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    n = min(n, limit)
    numba.set_num_threads(n)
    logger.debug("numba threads set to %d", n)
    return n
