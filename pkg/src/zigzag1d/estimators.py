"""Exact path functionals of a skeleton.

Between events the path is linear with slope +-1, so the time spent in
``[a, inf)`` on a segment is just the length of the part of its position range
lying above ``a``.  No discretisation is involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .zigzag import Skeleton

__all__ = [
    "IndicatorQuery",
    "OccupationResult",
    "occupation_time",
    "occupation_curve",
    "cumulative_occupation",
    "interval_occupation",
    "time_average",
    "path_integral",
]


@dataclass(frozen=True)
class IndicatorQuery:
    """The event ``[a, +inf)``."""

    a: float

    def __post_init__(self):
        if math.isnan(self.a):
            raise ValueError("threshold must not be NaN")


@dataclass(frozen=True)
class OccupationResult:
    total_time_in_set: float
    horizon: float

    @property
    def estimate(self) -> float:
        return self.total_time_in_set / self.horizon


def _occupied(dt: np.ndarray, x0: np.ndarray, x1: np.ndarray, a: float) -> np.ndarray:
    """Time in [a, inf) on unit-speed segments of duration dt from x0 to x1."""
    lo = np.minimum(x0, x1)
    hi = np.maximum(x0, x1)
    with np.errstate(invalid="ignore"):
        partial = np.clip(hi - a, 0.0, dt)
    return np.where(lo >= a, dt, partial)


def cumulative_occupation(skeleton: Skeleton, a: float, times) -> np.ndarray:
    """Time spent in ``[a, inf)`` during ``[0, s]`` for each sorted ``s`` in ``times``."""
    s = np.asarray(times, dtype=float)
    if s.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if np.any(np.diff(s) < 0):
        raise ValueError("checkpoints must be sorted")
    if s.size and (s[0] < 0 or s[-1] > skeleton.horizon):
        raise ValueError(f"checkpoints must lie in [0, {skeleton.horizon}]")
    knots_t, knots_x, v = skeleton.knots()
    per_segment = _occupied(np.diff(knots_t), knots_x[:-1], knots_x[1:], a)
    before = np.concatenate(([0.0], np.cumsum(per_segment)))
    idx = np.clip(np.searchsorted(knots_t, s, side="right") - 1, 0, v.size - 1)
    start_t = knots_t[idx]
    start_x = knots_x[idx]
    end_x = start_x + v[idx] * (s - start_t)
    partial = _occupied(s - start_t, start_x, end_x, a)
    return before[idx] + partial


def occupation_time(skeleton: Skeleton, query: IndicatorQuery, upto: float) -> OccupationResult:
    """Exact time spent in ``[query.a, inf)`` during ``[0, upto]``."""
    if not 0 < upto <= skeleton.horizon:
        raise ValueError(f"upto must lie in (0, {skeleton.horizon}], got {upto}")
    total = float(cumulative_occupation(skeleton, query.a, [upto])[0])
    return OccupationResult(total, float(upto))


def occupation_curve(skeleton: Skeleton, query: IndicatorQuery, checkpoints: Sequence[float]) -> np.ndarray:
    """Occupation fraction of ``[a, inf)`` at each checkpoint."""
    cp = np.asarray(checkpoints, dtype=float)
    if cp.size and cp[0] <= 0:
        raise ValueError("checkpoints must be positive")
    return cumulative_occupation(skeleton, query.a, cp) / cp


def interval_occupation(skeleton: Skeleton, lo: float, hi: float, times) -> np.ndarray:
    """Time spent in ``[lo, hi)`` up to each of ``times``; infinite ends allowed."""
    s = np.asarray(times, dtype=float)
    upper = np.zeros_like(s) if hi == math.inf else cumulative_occupation(skeleton, hi, s)
    lower = s if lo == -math.inf else cumulative_occupation(skeleton, lo, s)
    return lower - upper


# 5-point Gauss-Legendre on [-1, 1]
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def path_integral(
    skeleton: Skeleton,
    g: Callable,
    upto: float,
    *,
    order: int = 5,
    breakpoints: Sequence[float] = (),
) -> float:
    """Approximate int_0^upto g(X_s, Theta_s) ds with Gauss-Legendre per segment.

    ``g`` is called with arrays of positions and velocities.  Segments are
    further split where the path crosses any of ``breakpoints`` (kinks of g).
    """
    if not 0 < upto <= skeleton.horizon:
        raise ValueError(f"upto must lie in (0, {skeleton.horizon}]")
    if order == 5:
        nodes, weights = _GL_NODES, _GL_WEIGHTS
    else:
        nodes, weights = np.polynomial.legendre.leggauss(order)
    knots_t, knots_x, v = skeleton.knots()
    n = int(np.searchsorted(knots_t, upto, side="left"))
    t0 = knots_t[:n]
    x0 = knots_x[:n]
    vel = v[:n]
    t1 = np.minimum(knots_t[1 : n + 1], upto)

    # split at breakpoint crossings: time offsets where x0 + vel*tau = b
    cuts = [t0, t1]
    for b in breakpoints:
        tau = t0 + vel * (b - x0)
        inside = (tau > t0) & (tau < t1)
        cuts.append(np.where(inside, tau, t0))
    grid = np.sort(np.stack(cuts, axis=1), axis=1)
    a_t = grid[:, :-1]
    b_t = grid[:, 1:]
    half = 0.5 * (b_t - a_t)
    mid = 0.5 * (b_t + a_t)
    tau = mid[..., None] + half[..., None] * nodes
    x = x0[:, None, None] + vel[:, None, None] * (tau - t0[:, None, None])
    theta = np.broadcast_to(vel[:, None, None], x.shape)
    values = np.asarray(g(x, theta), dtype=float)
    return float(np.sum(half[..., None] * weights * values))


def time_average(skeleton: Skeleton, f: Callable, upto: float) -> float:
    """(1/upto) int_0^upto f(X_s) ds, 5-point Gauss-Legendre per segment."""
    return path_integral(skeleton, lambda x, theta: f(x), upto) / upto
