"""Numba acceleration switch.

The hot kernels in :mod:`dsvrptw.kernels` are written as plain loops over
numpy arrays, so the same source runs either jit-compiled (the default when
numba imports cleanly) or as ordinary Python. Set ``DSVRPTW_NUMBA=0`` in the
environment to force the pure-Python path; ``benchmarks/compare_backends.py``
times the two against each other.
"""

import os

_flag = os.environ.get("DSVRPTW_NUMBA", "1").strip().lower()
_wanted = _flag not in ("0", "false", "off", "no")

if _wanted:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _njit = None
else:
    _njit = None

NUMBA_ENABLED = _njit is not None


def maybe_njit(func=None, **options):
    """``@njit(cache=True)`` when acceleration is on, identity otherwise."""

    def wrap(f):
        if NUMBA_ENABLED:
            return _njit(cache=True, **options)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap


def py_func(f):
    """Return the uncompiled Python function behind a (possibly) jitted one."""
    return getattr(f, "py_func", f)
