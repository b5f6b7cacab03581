"""Optional numba acceleration.

Hot loops are written once as plain Python over numpy arrays and wrapped with
:func:`njit`. When numba is missing, or ``CACLAB_DISABLE_NUMBA=1`` is set in
the environment before import, the decorator is a no-op and the same source
runs as the pure-numpy path.
"""
import os
import warnings

_DISABLED = os.environ.get("CACLAB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

NUMBA_ENABLED = False
if not _DISABLED:
    try:
        import numba as _numba

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - depends on environment
        warnings.warn("numba not importable; falling back to the pure-numpy kernels")


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if NUMBA_ENABLED:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap


def python_impl(func):
    """Return the undecorated Python function behind a (possibly) jitted one."""
    return getattr(func, "py_func", func)
