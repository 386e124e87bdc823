"""Finite-range quantization of child-placement maps.

A Lipschitz map f with f(x) <= x is replaced by a piecewise-constant map
whose image is the finite grid {(j-1)*eps : j = 1..J}, so that newborn
particles can only appear at fixed locations.  The piecewise-linear rebuild
of the quantized map (used as a test oracle) is also provided here.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import EmptyLocationSet, InvalidParam, SublinearityViolated

__all__ = [
    "QuantizedMap",
    "PiecewiseLinearMap",
    "build_quantized",
    "eval_quantized",
    "value_grid",
    "build_fbar",
]

_SUBLINEARITY_TOL = 1e-12
_SPOT_CHECK_POINTS = 257


class QuantizedMap:
    """Downward quantization of a map f onto the value grid {(j-1)*eps}.

    Evaluation uses the closed form eps * floor(f(x) / eps), which is
    pointwise identical to selecting the grid value of the preimage cell
    containing x.  Outside [0, cap) the argument is clamped to the nearest
    in-range point before quantizing.
    """

    __slots__ = ("epsilon", "cap", "J", "f")

    def __init__(self, f: Callable, epsilon: float, cap: float, J: int):
        self.f = f
        self.epsilon = float(epsilon)
        self.cap = float(cap)
        self.J = int(J)

    def __call__(self, x):
        return eval_quantized(self, x)

    def slot_index(self, x):
        """Index j-1 of the grid value taken at x, as an integer array.

        Clipped to [0, J-1]; newborn bookkeeping matches slots by this
        index rather than by floating-point equality of grid values.
        """
        xa = np.asarray(x, dtype=np.float64)
        xc = np.clip(xa, 0.0, np.nextafter(self.cap, 0.0))
        fx = np.asarray(self.f(xc), dtype=np.float64)
        idx = np.floor(fx / self.epsilon).astype(np.int64)
        return np.clip(idx, 0, self.J - 1)

    def __repr__(self):
        return f"QuantizedMap(epsilon={self.epsilon}, cap={self.cap}, J={self.J})"


def _grid_count(epsilon: float, cap: float) -> int:
    ratio = cap / epsilon
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, abs(ratio)):
        return int(nearest)
    return int(np.floor(ratio)) + 1


def build_quantized(f: Callable, epsilon: float, cap: float) -> QuantizedMap:
    """Construct the quantized map of f on [0, cap) with step epsilon.

    f must satisfy f(x) <= x on [0, cap); this is spot-checked on a sample
    grid and SublinearityViolated is raised on failure.
    """
    if epsilon <= 0 or cap <= 0:
        raise InvalidParam(f"epsilon and cap must be positive, got {epsilon}, {cap}")
    xs = np.linspace(0.0, np.nextafter(cap, 0.0), _SPOT_CHECK_POINTS)
    fx = np.asarray(f(xs), dtype=np.float64)
    bad = fx > xs + _SUBLINEARITY_TOL
    if np.any(bad):
        x0 = xs[np.argmax(bad)]
        raise SublinearityViolated(f"f({x0!r}) exceeds its argument")
    return QuantizedMap(f, epsilon, cap, _grid_count(epsilon, cap))


def eval_quantized(q: QuantizedMap, x):
    """Grid value of q at x (scalar or array)."""
    idx = q.slot_index(x)
    out = idx * q.epsilon
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(out)
    return out


def value_grid(q: QuantizedMap) -> np.ndarray:
    """The value grid (0, eps, ..., (J-1)*eps), length J."""
    return np.arange(q.J) * q.epsilon


class PiecewiseLinearMap:
    """Continuous piecewise-linear map with constant extension outside the knots."""

    __slots__ = ("knots_x", "knots_y")

    def __init__(self, knots_x: Sequence[float], knots_y: Sequence[float]):
        self.knots_x = np.asarray(knots_x, dtype=np.float64)
        self.knots_y = np.asarray(knots_y, dtype=np.float64)

    def __call__(self, x):
        out = np.interp(x, self.knots_x, self.knots_y)
        if np.isscalar(x) or np.asarray(x).ndim == 0:
            return float(out)
        return out


def _constancy_intervals(q: QuantizedMap, hi: float, scan_points: int):
    """Breakpoints and values of q on [0, hi), found by scan plus bisection."""
    xs = np.linspace(0.0, np.nextafter(hi, 0.0), scan_points)
    idx = q.slot_index(xs)
    starts = [0.0]
    values = [int(idx[0])]
    for k in range(1, xs.size):
        if idx[k] != idx[k - 1]:
            lo, up = xs[k - 1], xs[k]
            target = idx[k]
            for _ in range(60):
                mid = 0.5 * (lo + up)
                if q.slot_index(mid) == target:
                    up = mid
                else:
                    lo = mid
            starts.append(float(up))
            values.append(int(idx[k]))
    return starts, [v * q.epsilon for v in values]


def build_fbar(
    q: QuantizedMap,
    locations: Sequence[float],
    scan_points: int = 20001,
) -> PiecewiseLinearMap:
    """Continuous piecewise-linear rebuild of a quantized map.

    On each constancy interval [d_i, d_{i+1}) of q that contains at least
    one point of `locations`, the rebuild is constant at the grid value up
    to the largest such point, then interpolates linearly to the next
    interval's value; the final piece is constant.  Intervals containing no
    location are bridged by letting the preceding linear segment continue.
    The result agrees with q at every supplied location and stays within
    one quantization step of q.

    This map is a verification aid only: the time stepper queries the
    quantized map directly, and the two agree on all particle locations by
    construction.
    """
    d = np.unique(np.asarray(locations, dtype=np.float64))
    if d.size == 0:
        raise EmptyLocationSet("need at least one location")
    hi = max(q.cap, float(d[-1]) * (1.0 + 1e-12) + 1e-300)
    starts, vals = _constancy_intervals(q, hi, scan_points)
    starts.append(np.inf)

    knots_x: list[float] = []
    knots_y: list[float] = []

    def add(x, y):
        if knots_x and x <= knots_x[-1]:
            return
        knots_x.append(x)
        knots_y.append(y)

    n = len(vals)
    for i in range(n):
        lo, up = starts[i], starts[i + 1]
        inside = d[(d >= lo) & (d < up)]
        if i == n - 1:
            add(lo, vals[i])
            break
        if inside.size == 0:
            continue  # bridged: previous segment continues to the next knot
        d_max = float(inside[-1])
        add(lo, vals[i])
        add(d_max, vals[i])
    return PiecewiseLinearMap(knots_x, knots_y)
