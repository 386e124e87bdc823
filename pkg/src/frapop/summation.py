"""Compensated per-slot accumulation.

Birth inflows are accumulated parent-by-parent in sorted-location order
with Kahan compensation, so results are reproducible bit-for-bit across
runs regardless of how the work is batched internally.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn


__all__ = ["kahan_bincount", "kahan_bincount_py", "kahan_sum"]


@njit(cache=True)
def _kahan_bincount_kernel(slots, values, out):  # pragma: no cover - jitted
    comp = np.zeros(out.size)
    for k in range(slots.size):
        i = slots[k]
        y = values[k] - comp[i]
        t = out[i] + y
        comp[i] = (t - out[i]) - y
        out[i] = t


def kahan_bincount_py(slots, values, out) -> None:
    """Pure-Python reference for the jitted kernel; bit-identical by design."""
    comp = np.zeros(out.size)
    for k in range(slots.size):
        i = slots[k]
        y = values[k] - comp[i]
        t = out[i] + y
        comp[i] = (t - out[i]) - y
        out[i] = t


def kahan_bincount(slots, values, out) -> None:
    """Add values[k] into out[slots[k]], compensated, in input order."""
    slots = np.ascontiguousarray(slots, dtype=np.int64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if HAVE_NUMBA:
        _kahan_bincount_kernel(slots, values, out)
    else:
        kahan_bincount_py(slots, values, out)


def kahan_sum(values) -> float:
    """Compensated sequential sum of a 1-D array."""
    s = 0.0
    comp = 0.0
    for v in np.asarray(values, dtype=np.float64):
        y = v - comp
        t = s + y
        comp = (t - s) - y
        s = t
    return s
