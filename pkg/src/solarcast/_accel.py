"""Numba switch.

Set ``SOLARCAST_NUMBA=0`` before import to force the pure-numpy kernels.
When numba is missing the numpy path is used regardless of the flag.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("SOLARCAST_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def njit(fn):
    """Compile ``fn`` with numba in nopython mode, or return it untouched."""
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
