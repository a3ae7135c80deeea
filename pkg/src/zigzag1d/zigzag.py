"""Exact simulation of the one-dimensional Zig-Zag process.

The particle moves at unit speed and flips its velocity at the arrivals of an
inhomogeneous Poisson process with rate

    lambda(x, theta) = max(theta * U'(x), 0) + gamma(x).

Two independent clocks are superposed.  The bounce clock is inverted exactly:
on an uphill stretch its integrated rate is the increase of ``U``, so the
event position solves ``U(z) = U(y) + E`` with ``E ~ Exp(1)``.  The refresh
clock is exact for constant rates and thinned otherwise.

Per event the stream is consumed in a fixed order: one uniform for the bounce
level, then the refresh clock's uniforms.  This makes every run a prefix of any
longer run with the same stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import optimize

from . import _kernel
from .rng import RngStream
from .targets import RefreshPolicy, Target

__all__ = [
    "BOUNCE",
    "REFRESH",
    "SimulationError",
    "ThinningBoundError",
    "ZigZagState",
    "Skeleton",
    "switching_rate",
    "first_event_time",
    "simulate",
    "position_at",
    "concatenate",
    "read_skeleton_csv",
]

BOUNCE = 0
REFRESH = 1
_KIND_NAMES = {BOUNCE: "bounce", REFRESH: "refresh"}

DEFAULT_MAX_EVENTS = 100_000_000
# width of a thinning window when gamma has no global bound
_THINNING_WINDOW = 1.0
_ROOT_XTOL = 1e-12
_ROOT_MAXITER = 200


class SimulationError(RuntimeError):
    pass


class ThinningBoundError(SimulationError):
    def __init__(self, x: float, rate: float, bound: float):
        super().__init__(f"refresh rate {rate!r} exceeds declared bound {bound!r} at x={x!r}")
        self.x = x


@dataclass(frozen=True)
class ZigZagState:
    x: float
    theta: int

    def __post_init__(self):
        if self.theta not in (-1, 1):
            raise ValueError(f"velocity must be -1 or +1, got {self.theta!r}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "theta", int(self.theta))

    @classmethod
    def parse(cls, text: str) -> "ZigZagState":
        """Parse ``"x,theta"`` such as ``"-5,+1"``."""
        try:
            x_text, theta_text = text.split(",")
            theta = float(theta_text)
        except ValueError:
            raise ValueError(f"expected 'x,theta', got {text!r}") from None
        if theta not in (-1.0, 1.0):
            raise ValueError(f"velocity must be -1 or +1, got {theta_text!r}")
        return cls(float(x_text), int(theta))


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Event record of one trajectory on ``[0, horizon]``.

    ``times[i]``, ``kinds[i]`` and ``positions[i]`` describe the i-th velocity
    flip; the velocity alternates sign starting from ``initial.theta``.
    """

    initial: ZigZagState
    times: np.ndarray
    kinds: np.ndarray
    positions: np.ndarray
    horizon: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        times = np.asarray(self.times, dtype=float)
        if times.size and (np.any(np.diff(times) <= 0) or times[0] <= 0 or times[-1] > self.horizon):
            raise ValueError("event times must be strictly increasing inside (0, horizon]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "kinds", np.asarray(self.kinds, dtype=np.int8))
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def events(self) -> list[tuple[float, int, float]]:
        return list(zip(self.times.tolist(), self.kinds.tolist(), self.positions.tolist()))

    def velocities(self) -> np.ndarray:
        """Velocity on each of the ``n_events + 1`` segments."""
        signs = np.where(np.arange(self.n_events + 1) % 2 == 0, 1, -1)
        return self.initial.theta * signs

    def knots(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Segment endpoints: times ``[0, t_1, ..., T]``, positions, and velocities."""
        v = self.velocities()
        t_last = self.times[-1] if self.n_events else 0.0
        x_last = self.positions[-1] if self.n_events else self.initial.x
        x_end = x_last + v[-1] * (self.horizon - t_last)
        t = np.concatenate(([0.0], self.times, [self.horizon]))
        x = np.concatenate(([self.initial.x], self.positions, [x_end]))
        return t, x, v

    @property
    def final_state(self) -> ZigZagState:
        _, x, v = self.knots()
        return ZigZagState(x[-1], int(v[-1]))

    def check(self, tol: float = 1e-9) -> None:
        """Assert the unit-speed law between consecutive knots."""
        t, x, _ = self.knots()
        gap = np.abs(np.abs(np.diff(x)) - np.diff(t))
        scale = np.maximum(1.0, np.abs(x[1:]))
        if np.any(gap > tol * scale):
            i = int(np.argmax(gap / scale))
            raise AssertionError(f"unit-speed law broken on segment {i}: gap {gap[i]:.3g}")

    def to_csv(self, path: str | Path) -> None:
        lines = [f"# {key}: {value}" for key, value in self.meta.items()]
        lines.append(f"# initial: {self.initial.x:.17g},{self.initial.theta:+d}")
        lines.append(f"# horizon: {self.horizon:.17g}")
        lines.append("time,kind,position")
        for t, k, p in zip(self.times.tolist(), self.kinds.tolist(), self.positions.tolist()):
            lines.append(f"{t:.17g},{_KIND_NAMES[k]},{p:.17g}")
        Path(path).write_text("\n".join(lines) + "\n")


def read_skeleton_csv(path: str | Path) -> Skeleton:
    meta: dict[str, str] = {}
    times, kinds, positions = [], [], []
    kind_codes = {name: code for code, name in _KIND_NAMES.items()}
    with open(path) as handle:
        for line in handle:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif line == "time,kind,position" or not line:
                continue
            else:
                t, k, p = line.split(",")
                times.append(float(t))
                kinds.append(kind_codes[k])
                positions.append(float(p))
    initial = ZigZagState.parse(meta.pop("initial"))
    horizon = float(meta.pop("horizon"))
    return Skeleton(initial, np.array(times), np.array(kinds), np.array(positions), horizon, meta)


# --------------------------------------------------------------------------
# rates and event times


def switching_rate(state: ZigZagState, target: Target, refresh: RefreshPolicy) -> float:
    """lambda(x, theta) = [theta U'(x)]^+ + gamma(x)."""
    slope = state.theta * float(target.grad_potential(state.x))
    return max(slope, 0.0) + float(refresh.rate(state.x, target))


def _exp_draw(gen: np.random.Generator) -> float:
    return -math.log1p(-gen.random())


def _solve_level(target: Target, y: float, theta: int, level_u: float, lo: float, hi: float) -> float:
    """Distance s in [lo, hi] along the ray from y with U(y + theta s) = level_u."""
    U = target.potential

    def excess(s):
        return float(U(y + theta * s)) - level_u

    try:
        s, info = optimize.brentq(
            excess, lo, hi, xtol=_ROOT_XTOL, rtol=4 * np.finfo(float).eps,
            maxiter=_ROOT_MAXITER, full_output=True, disp=False,
        )
    except (ValueError, RuntimeError) as exc:
        raise SimulationError(f"root finder failed from y={y!r}: {exc}") from None
    if not info.converged:
        raise SimulationError(f"root finder did not converge from y={y!r} after {info.iterations} steps")
    slope = theta * float(target.grad_potential(y + theta * s))
    if slope > 0:
        polished = s - excess(s) / slope
        if lo <= polished <= hi and abs(excess(polished)) <= abs(excess(s)):
            s = polished
    return s


def _outer_crossing(target: Target, y: float, theta: int, level: float) -> float:
    """Distance to climb ``level`` on the last (unbounded, uphill) monotone piece."""
    if target.tail_inverse is not None:
        z = target.tail_inverse(y, theta, level)
        return theta * (z - y)
    level_u = float(target.potential(y)) + level
    lo, hi = 0.0, 1.0
    for _ in range(1100):
        if float(target.potential(y + theta * hi)) >= level_u:
            return _solve_level(target, y, theta, level_u, lo, hi)
        lo, hi = hi, 2.0 * hi
    raise SimulationError(f"could not bracket level crossing from y={y!r}; is exp(-U) integrable?")


def _bounce_distance(x: float, theta: int, target: Target, level: float) -> float:
    """Distance travelled before the bounce clock with integrated level ``level`` rings."""
    ahead = [p for p in target.stationary_points if theta * (p - x) > 0]
    if theta < 0:
        ahead.reverse()
    travelled = 0.0
    y = x
    for p in ahead:
        u_y = float(target.potential(y))
        gain = float(target.potential(p)) - u_y
        if gain > 0:
            if gain >= level:
                return travelled + _solve_level(target, y, theta, u_y + level, 0.0, abs(p - y))
            level -= gain
        travelled += abs(p - y)
        y = p
    return travelled + _outer_crossing(target, y, theta, level)


def _thinned_distance(x, theta, target, refresh, cap, gen) -> float:
    bound = refresh.global_bound(target)
    if bound is not None:
        if bound == 0.0:
            return math.inf
        s = 0.0
        while True:
            s += _exp_draw(gen) / bound
            if s > cap:
                return math.inf
            if _accept(x + theta * s, bound, target, refresh, gen):
                return s
    if refresh.kind == "custom":
        raise SimulationError("custom refresh rate without a bound cannot be thinned")
    start = 0.0
    while start <= cap:
        end = start + _THINNING_WINDOW
        a, b = x + theta * start, x + theta * end
        bound = refresh.bound_on(min(a, b), max(a, b), target)
        s = start
        while bound > 0.0:
            s += _exp_draw(gen) / bound
            if s > end or s > cap:
                break
            if _accept(x + theta * s, bound, target, refresh, gen):
                return s
        start = end
    return math.inf


def _accept(z, bound, target, refresh, gen) -> bool:
    rate = float(refresh.rate(z, target))
    if rate > bound * (1.0 + 1e-12):
        raise ThinningBoundError(z, rate, bound)
    return gen.random() * bound < rate


def _refresh_distance(x, theta, target, refresh, cap, gen) -> float:
    if refresh.kind == "zero" or (refresh.kind in ("constant", "grad") and refresh.value == 0.0):
        return math.inf
    if refresh.kind == "constant":
        return _exp_draw(gen) / refresh.value
    return _thinned_distance(x, theta, target, refresh, cap, gen)


def _next_event(x, theta, target, refresh, remaining, gen) -> Optional[tuple[float, int]]:
    s_bounce = _bounce_distance(x, theta, target, _exp_draw(gen))
    s_refresh = _refresh_distance(x, theta, target, refresh, min(s_bounce, remaining), gen)
    if s_refresh < s_bounce:
        s, kind = s_refresh, REFRESH
    else:
        s, kind = s_bounce, BOUNCE
    if s >= remaining:
        return None
    return s, kind


def first_event_time(
    state: ZigZagState,
    target: Target,
    refresh: RefreshPolicy,
    horizon: float,
    rng: RngStream,
) -> Optional[tuple[float, int]]:
    """Sample the first switching time from ``state``.

    Returns ``(time, kind)`` or ``None`` when no event happens before ``horizon``.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    return _next_event(state.x, state.theta, target, refresh, float(horizon), rng.generator)


def _fast_path(target: Target, refresh: RefreshPolicy) -> Optional[tuple]:
    if target.family is None:
        return None
    family = {"student": _kernel.FAMILY_STUDENT, "gaussian": _kernel.FAMILY_GAUSSIAN}[target.family[0]]
    if refresh.kind == "zero" or (refresh.kind in ("constant", "grad") and refresh.value == 0.0):
        return family, _kernel.REFRESH_ZERO, 0.0, 0.0
    if refresh.kind == "constant":
        return family, _kernel.REFRESH_CONSTANT, refresh.value, refresh.value
    if refresh.kind == "grad" and target.grad_bound is not None:
        return family, _kernel.REFRESH_GRAD, refresh.value, refresh.value * target.grad_bound
    return None


def simulate(
    initial: ZigZagState,
    horizon: float,
    target: Target,
    refresh: RefreshPolicy,
    rng: RngStream,
    *,
    max_events: int = DEFAULT_MAX_EVENTS,
    engine: str = "auto",
) -> Skeleton:
    """Simulate the process on ``[0, horizon]``.

    ``engine`` is ``"auto"`` (compiled loop when the target/refresh pair
    supports it), ``"compiled"`` or ``"python"``.  Both engines draw the same
    uniforms in the same order.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    horizon = float(horizon)
    meta = {"target": target.name, "refresh": refresh.tag, "seed": rng.seed, "stream": rng.stream_id}
    fast = _fast_path(target, refresh) if engine != "python" else None
    if engine == "compiled" and fast is None:
        raise ValueError(f"no compiled kernel for target {target.name!r} with refresh {refresh.tag!r}")
    if fast is not None:
        family, rkind, rvalue, rbound = fast
        times, kinds, positions, status, bad_x = _kernel.run(
            initial.x, float(initial.theta), horizon, family, float(target.family[1]),
            rkind, rvalue, rbound, rng.generator, int(max_events),
        )
        if status == _kernel.STATUS_BOUND_VIOLATION:
            raise ThinningBoundError(bad_x, float(refresh.rate(bad_x, target)), rbound)
        if status == _kernel.STATUS_TOO_MANY_EVENTS:
            raise SimulationError(f"event cap {max_events} exceeded before time {times[-1]!r}")
        return Skeleton(initial, times, kinds, positions, horizon, meta)

    gen = rng.generator
    x, theta, t = initial.x, initial.theta, 0.0
    times, kinds, positions = [], [], []
    while True:
        event = _next_event(x, theta, target, refresh, horizon - t, gen)
        if event is None:
            break
        s, kind = event
        t += s
        x += theta * s
        theta = -theta
        times.append(t)
        kinds.append(kind)
        positions.append(x)
        if len(times) > max_events:
            raise SimulationError(f"event cap {max_events} exceeded before time {t!r}")
    return Skeleton(initial, np.array(times), np.array(kinds), np.array(positions), horizon, meta)


def position_at(skeleton: Skeleton, t):
    """Position at time(s) ``t`` by piecewise-linear reconstruction."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > skeleton.horizon):
        raise ValueError(f"time outside [0, {skeleton.horizon}]")
    knots_t, knots_x, v = skeleton.knots()
    idx = np.searchsorted(knots_t, t_arr, side="right") - 1
    idx = np.clip(idx, 0, v.size - 1)
    out = knots_x[idx] + v[idx] * (t_arr - knots_t[idx])
    return out[()] if out.ndim == 0 else out


def concatenate(first: Skeleton, second: Skeleton) -> Skeleton:
    """Join ``second`` onto the end of ``first``; it must start from first's final state."""
    end = first.final_state
    if second.initial.theta != end.theta or not math.isclose(second.initial.x, end.x, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError("second skeleton does not start where the first one ends")
    offset = first.horizon
    times = np.concatenate((first.times, second.times + offset))
    return Skeleton(
        first.initial,
        times,
        np.concatenate((first.kinds, second.kinds)),
        np.concatenate((first.positions, second.positions)),
        offset + second.horizon,
        dict(first.meta),
    )
