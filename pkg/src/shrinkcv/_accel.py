"""JIT switch.

Kernels are compiled with numba unless ``SHRINKCV_DISABLE_JIT`` is set to a
truthy value (or numba cannot be imported), in which case the vectorized
numpy implementations in :mod:`shrinkcv.kernels` are used instead.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}

JIT_REQUESTED = os.environ.get("SHRINKCV_DISABLE_JIT", "").strip().lower() in _FALSY

try:
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    HAS_NUMBA = False

JIT_ENABLED = JIT_REQUESTED and HAS_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a pass-through decorator.

    The kernels stay importable (and testable as plain Python) either way;
    whether they are *dispatched to* is decided by ``JIT_ENABLED``.
    """
    if HAS_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap
