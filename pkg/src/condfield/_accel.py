"""Backend selection for the hot per-ray kernels.

Set ``CONDFIELD_DISABLE_NUMBA=1`` to force the pure-numpy implementations.
Both backends are always importable so they can be compared.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba ships in the default install
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("CONDFIELD_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")


def njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
