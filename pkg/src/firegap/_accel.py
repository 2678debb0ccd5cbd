"""Optional numba acceleration.

Set ``FIREGAP_PURE_NUMPY=1`` before import to force the numpy fallback paths.
Both paths must produce bit-identical results; the test-suite checks this.
"""

import os

PURE_NUMPY = os.environ.get("FIREGAP_PURE_NUMPY", "0").lower() not in ("", "0", "false", "no")

try:
    if PURE_NUMPY:
        raise ImportError
    import numba as nb

    HAVE_NUMBA = True
except ImportError:
    nb = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
