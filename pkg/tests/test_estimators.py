import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zigzag1d.estimators import (
    IndicatorQuery,
    cumulative_occupation,
    interval_occupation,
    occupation_curve,
    occupation_time,
    path_integral,
    time_average,
)
from zigzag1d.rng import RngStream
from zigzag1d.targets import RefreshPolicy, make_cauchy
from zigzag1d.zigzag import BOUNCE, Skeleton, ZigZagState, concatenate, position_at, simulate

CAUCHY = make_cauchy()


def _straight(horizon, x0=0.0, theta=1):
    return Skeleton(ZigZagState(x0, theta), np.array([]), np.array([]), np.array([]), horizon)


def _three_events():
    # 0 -> 3 (t=3), 3 -> -1 (t=7), -1 -> 1 (t=9), 1 -> -1 (t=11 = horizon)
    return Skeleton(
        ZigZagState(0.0, 1),
        np.array([3.0, 7.0, 9.0]),
        np.array([BOUNCE] * 3),
        np.array([3.0, -1.0, 1.0]),
        11.0,
    )


def test_single_segment_crossing():
    result = occupation_time(_straight(10.0), IndicatorQuery(5.0), 10.0)
    assert result.total_time_in_set == 5.0
    assert result.estimate == 0.5


def test_threshold_below_path_gives_one():
    sk = simulate(ZigZagState(0.0, 1), 100.0, CAUCHY, RefreshPolicy.zero(), RngStream(1))
    low = sk.positions.min() - 1.0 if sk.n_events else -1.0
    assert occupation_time(sk, IndicatorQuery(min(low, -1.0)), 100.0).estimate == 1.0


def test_hand_built_three_event_skeleton():
    sk = _three_events()
    q = IndicatorQuery(1.0)
    # above 1 during [1, 5] only; the last two segments just touch 1 at t = 9
    checkpoints = [2.0, 3.0, 5.0, 9.0, 11.0]
    expected = np.array([1.0 / 2.0, 2.0 / 3.0, 4.0 / 5.0, 4.0 / 9.0, 4.0 / 11.0])
    np.testing.assert_allclose(occupation_curve(sk, q, checkpoints), expected, rtol=1e-14)
    assert occupation_time(sk, IndicatorQuery(0.0), 11.0).total_time_in_set == pytest.approx(3 + 3 + 1 + 1, rel=1e-14)
    assert occupation_time(sk, IndicatorQuery(-1.0), 11.0).total_time_in_set == 11.0


def test_curve_at_horizon_matches_occupation_time():
    sk = simulate(ZigZagState(-5.0, 1), 1e3, CAUCHY, RefreshPolicy.constant(1.0), RngStream(3))
    q = IndicatorQuery(2.0)
    assert occupation_curve(sk, q, [1e3])[0] == pytest.approx(occupation_time(sk, q, 1e3).estimate, rel=1e-15)


def test_checkpoints_must_be_valid():
    sk = _straight(10.0)
    with pytest.raises(ValueError):
        occupation_curve(sk, IndicatorQuery(1.0), [0.0, 1.0])
    with pytest.raises(ValueError):
        cumulative_occupation(sk, 1.0, [3.0, 2.0])
    with pytest.raises(ValueError):
        occupation_time(sk, IndicatorQuery(1.0), 11.0)
    with pytest.raises(ValueError):
        _straight(0.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("a", [-2.0, 0.3, 5.0])
def test_riemann_oracle(seed, a):
    horizon = 200.0
    sk = simulate(ZigZagState(-5.0, 1), horizon, CAUCHY, RefreshPolicy.grad_proportional(1.0), RngStream(seed))
    h = 1e-3
    grid = (np.arange(int(horizon / h)) + 0.5) * h
    riemann = h * np.count_nonzero(position_at(sk, grid) >= a)
    _, x, _ = sk.knots()
    crossings = np.count_nonzero((x[:-1] - a) * (x[1:] - a) < 0) + sk.n_events + 1
    exact = occupation_time(sk, IndicatorQuery(a), horizon).total_time_in_set
    assert abs(exact - riemann) <= 2 * h * crossings


def test_additivity_over_concatenation():
    first = simulate(ZigZagState(-5.0, 1), 300.0, CAUCHY, RefreshPolicy.zero(), RngStream(10))
    second = simulate(first.final_state, 500.0, CAUCHY, RefreshPolicy.zero(), RngStream(11))
    joined = concatenate(first, second)
    q = IndicatorQuery(1.5)
    whole = occupation_time(joined, q, 800.0).total_time_in_set
    parts = occupation_time(first, q, 300.0).total_time_in_set + occupation_time(second, q, 500.0).total_time_in_set
    assert whole == pytest.approx(parts, rel=1e-12, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), a=st.floats(-20, 20))
def test_cumulative_occupation_is_monotone(seed, a):
    sk = simulate(ZigZagState(0.0, 1), 500.0, CAUCHY, RefreshPolicy.constant(0.5), RngStream(seed))
    times = np.linspace(0.0, 500.0, 333)
    cum = cumulative_occupation(sk, a, times)
    assert cum[0] == 0.0
    assert np.all(np.diff(cum) >= -1e-12)
    assert np.all(np.diff(cum) <= np.diff(times) + 1e-12)
    curve = occupation_curve(sk, IndicatorQuery(a), times[1:])
    assert np.all(np.diff(curve * times[1:]) >= -1e-12)


def test_interval_occupation_partitions_time():
    sk = simulate(ZigZagState(0.0, 1), 1e3, CAUCHY, RefreshPolicy.zero(), RngStream(21))
    t = np.array([10.0, 500.0, 1e3])
    pieces = sum(interval_occupation(sk, lo, hi, t) for lo, hi in [(-math.inf, -1), (-1, 0), (0, 4), (4, math.inf)])
    np.testing.assert_allclose(pieces, t, rtol=1e-13)


def test_time_average_examples():
    ramp = _straight(10.0)
    assert time_average(ramp, lambda x: x, 2.0) == pytest.approx(1.0, rel=1e-14)
    assert time_average(ramp, lambda x: x**2, 3.0) == pytest.approx(3.0, rel=1e-14)
    sk = simulate(ZigZagState(0.0, 1), 100.0, CAUCHY, RefreshPolicy.zero(), RngStream(2))
    assert time_average(sk, lambda x: np.full_like(x, 2.5), 100.0) == pytest.approx(2.5, rel=1e-14)


def test_path_integral_uses_velocity_and_breakpoints():
    sk = _three_events()
    # int theta ds = displacement = final position - initial
    assert path_integral(sk, lambda x, th: th, 11.0) == pytest.approx(-1.0, abs=1e-13)
    # |x| has a kink at 0; exact with the breakpoint: 4.5 + (4.5 + 0.5) + 1 + 1
    assert path_integral(sk, lambda x, th: np.abs(x), 11.0, breakpoints=[0.0]) == pytest.approx(11.5, rel=1e-13)
    high = path_integral(sk, lambda x, th: np.cos(x), 11.0, order=20)
    exact = math.sin(3) + (math.sin(3) - math.sin(-1)) + (math.sin(1) - math.sin(-1)) + (math.sin(1) - math.sin(-1))
    assert high == pytest.approx(exact, rel=1e-12)
