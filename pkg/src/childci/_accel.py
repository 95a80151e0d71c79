"""Optional numba acceleration.

Set ``CHILDCI_DISABLE_NUMBA=1`` before importing :mod:`childci` to run every
hot kernel through its pure-numpy path instead of the compiled one.
"""

import os

_DISABLED = os.environ.get("CHILDCI_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba as _nb
except ImportError:  # pragma: no cover
    _nb = None

NUMBA_AVAILABLE = _nb is not None
USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


def njit(func=None, **kwargs):
    """``numba.njit`` when available, otherwise the identity decorator.

    The compiled object is returned even when the fallback path is selected
    so benchmarks can still call it; dispatch happens in :mod:`childci.kernels`.
    """
    kwargs.setdefault("cache", True)

    def wrap(f):
        if not NUMBA_AVAILABLE:
            return f
        return _nb.njit(**kwargs)(f)

    if func is not None:
        return wrap(func)
    return wrap
