"""Compiled-kernel backend selection.

The correlation-matrix kernels have two implementations: a numba
``@njit`` path and a vectorized numpy path.  The active one is chosen at
import time from the ``MFCOKRIG_NUMBA`` environment variable; anything in
{"0", "false", "no", "off"} (case-insensitive) forces the numpy path, as
does numba failing to import.  Both paths are importable directly for
testing and benchmarking regardless of the flag.
"""

import os


def _flag_enabled():
    raw = os.environ.get("MFCOKRIG_NUMBA", "1").strip().lower()
    return raw not in ("0", "false", "no", "off")


try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        # Signature-compatible no-op decorator.
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


USE_NUMBA = HAS_NUMBA and _flag_enabled()
