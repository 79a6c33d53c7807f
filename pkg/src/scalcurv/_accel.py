"""Optional numba acceleration.

Set ``SCALCURV_NO_NUMBA=1`` to run every kernel through its pure-numpy path.
The flag is read once, at import time.
"""
from __future__ import annotations

import os

_DISABLED = os.environ.get("SCALCURV_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    NUMBA_ENABLED = True

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

except ImportError:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        # bare @njit and @njit(...) both work
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap
