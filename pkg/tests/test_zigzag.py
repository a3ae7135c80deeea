import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from zigzag1d.estimators import interval_occupation
from zigzag1d.rng import RngStream
from zigzag1d.targets import RefreshPolicy, make_cauchy, make_custom, make_gaussian, make_student
from zigzag1d.zigzag import (
    BOUNCE,
    REFRESH,
    SimulationError,
    Skeleton,
    ThinningBoundError,
    ZigZagState,
    _bounce_distance,
    _solve_level,
    concatenate,
    first_event_time,
    position_at,
    read_skeleton_csv,
    simulate,
    switching_rate,
)

CAUCHY = make_cauchy()
GAUSSIAN = make_gaussian()
ZERO = RefreshPolicy.zero()


def _first_times(state, target, refresh, n, seed):
    rng = RngStream(seed)
    out = np.empty(n)
    for i in range(n):
        event = first_event_time(state, target, refresh, math.inf, rng)
        out[i] = event[0]
    return out


def test_switching_rate_examples():
    assert switching_rate(ZigZagState(1.0, 1), CAUCHY, ZERO) == 1.0
    assert switching_rate(ZigZagState(1.0, -1), CAUCHY, ZERO) == 0.0
    assert switching_rate(ZigZagState(1.0, -1), CAUCHY, RefreshPolicy.constant(1.0)) == 1.0
    assert switching_rate(ZigZagState(-2.0, -1), GAUSSIAN, RefreshPolicy.grad_proportional(0.5)) == 3.0


def test_state_validation_and_parsing():
    assert ZigZagState.parse("-5,+1") == ZigZagState(-5.0, 1)
    assert ZigZagState.parse(" 2.5 , -1") == ZigZagState(2.5, -1)
    with pytest.raises(ValueError):
        ZigZagState(0.0, 0)
    with pytest.raises(ValueError):
        ZigZagState.parse("1,2")
    with pytest.raises(ValueError):
        ZigZagState.parse("1")


def test_gaussian_inversion_matches_root_finder():
    level = math.e
    closed = _bounce_distance(0.0, 1, GAUSSIAN, level)
    assert closed == pytest.approx(math.sqrt(2 * math.e), rel=1e-15)
    # same target without the closed-form tail inverse goes through bracketing + brentq
    plain = make_custom(GAUSSIAN.potential, GAUSSIAN.grad_potential, [0.0], interval_bound=GAUSSIAN.interval_bound)
    assert _bounce_distance(0.0, 1, plain, level) == pytest.approx(math.sqrt(2 * math.e), rel=1e-12)
    assert _solve_level(GAUSSIAN, 0.0, 1, level, 0.0, 10.0) == pytest.approx(math.sqrt(2 * math.e), rel=1e-12)


@pytest.mark.parametrize("dof", [1.0, 2.0, 4.5])
@settings(max_examples=40, deadline=None)
@given(y=st.floats(-50, 50), level=st.floats(1e-6, 30), theta=st.sampled_from([-1, 1]))
def test_student_tail_inverse_agrees_with_bracketing(dof, y, level, theta):
    target = make_student(dof)
    plain = make_custom(target.potential, target.grad_potential, [0.0], grad_bound=target.grad_bound)
    a = _bounce_distance(y, theta, target, level)
    b = _bounce_distance(y, theta, plain, level)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)
    end = y + theta * a
    gained = target.potential(end) - target.potential(0.0 if theta * y < 0 else y)
    assert gained == pytest.approx(level, rel=1e-9, abs=1e-9)


def test_no_event_while_moving_downhill():
    # from -5 towards the mode with gamma = 0 the rate is identically zero
    rng = RngStream(3)
    for _ in range(200):
        assert first_event_time(ZigZagState(-5.0, 1), CAUCHY, ZERO, 4.999, rng) is None
    skeleton = simulate(ZigZagState(-5.0, 1), 10.0, CAUCHY, ZERO, RngStream(1))
    assert skeleton.n_events == 0 or skeleton.positions[0] >= 0.0


def test_cauchy_first_event_law():
    times = _first_times(ZigZagState(0.0, 1), CAUCHY, ZERO, 100_000, seed=2024)
    ks = stats.kstest(times, lambda s: s**2 / (1 + s**2))
    assert ks.statistic < 0.006
    assert np.median(times) == pytest.approx(1.0, abs=0.02)


def test_constant_refresh_first_event_law():
    # survival exp(-s) / (1 + s^2) from (0, +1)
    times = _first_times(ZigZagState(0.0, 1), CAUCHY, RefreshPolicy.constant(1.0), 50_000, seed=5)
    ks = stats.kstest(times, lambda s: 1 - np.exp(-s) / (1 + s**2))
    assert ks.pvalue > 1e-3


def test_windowed_thinning_first_event_law():
    # Gaussian with gamma = c|x| has no global bound; total rate (1 + c) s from (0, +1)
    c = 0.7
    refresh = RefreshPolicy.grad_proportional(c)
    times = _first_times(ZigZagState(0.0, 1), GAUSSIAN, refresh, 30_000, seed=9)
    ks = stats.kstest(times, lambda s: 1 - np.exp(-(1 + c) * s**2 / 2))
    assert ks.pvalue > 1e-3


def test_event_kinds_follow_rates():
    # far in the tail moving outwards the bounce rate is ~0.02 and the refresh rate is 1
    skeleton = simulate(ZigZagState(100.0, 1), 1.0, CAUCHY, RefreshPolicy.constant(50.0), RngStream(4))
    kinds = skeleton.kinds
    assert np.mean(kinds == REFRESH) > 0.9
    assert set(np.unique(kinds)) <= {BOUNCE, REFRESH}


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**63),
    x0=st.floats(-200, 200),
    theta=st.sampled_from([-1, 1]),
    refresh=st.sampled_from(["zero", "const", "grad"]),
)
def test_unit_speed_and_bounds(seed, x0, theta, refresh):
    policy = {"zero": ZERO, "const": RefreshPolicy.constant(0.5), "grad": RefreshPolicy.grad_proportional(1.0)}[refresh]
    horizon = 300.0
    skeleton = simulate(ZigZagState(x0, theta), horizon, CAUCHY, policy, RngStream(seed))
    skeleton.check()
    assert np.all(np.abs(skeleton.positions - x0) <= skeleton.times + 1e-9)
    assert np.all(np.abs(skeleton.positions) <= abs(x0) + horizon)
    t = np.linspace(0, horizon, 97)
    assert np.all(np.abs(position_at(skeleton, t) - x0) <= t + 1e-9)


def test_determinism():
    a = simulate(ZigZagState(-5.0, 1), 1e3, CAUCHY, RefreshPolicy.constant(1.0), RngStream(42, 7))
    b = simulate(ZigZagState(-5.0, 1), 1e3, CAUCHY, RefreshPolicy.constant(1.0), RngStream(42, 7))
    c = simulate(ZigZagState(-5.0, 1), 1e3, CAUCHY, RefreshPolicy.constant(1.0), RngStream(42, 8))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.times[:5], c.times[:5])


@pytest.mark.parametrize(
    "target,refresh",
    [
        (CAUCHY, ZERO),
        (CAUCHY, RefreshPolicy.constant(1.0)),
        (CAUCHY, RefreshPolicy.grad_proportional(1.0)),
        (make_student(2.5), RefreshPolicy.grad_proportional(0.3)),
        (GAUSSIAN, ZERO),
        (GAUSSIAN, RefreshPolicy.constant(2.0)),
    ],
    ids=lambda v: getattr(v, "name", None) or getattr(v, "tag", None),
)
def test_compiled_and_python_engines_agree(target, refresh):
    start = ZigZagState(-3.0, 1)
    fast = simulate(start, 200.0, target, refresh, RngStream(99, 3), engine="compiled")
    slow = simulate(start, 200.0, target, refresh, RngStream(99, 3), engine="python")
    assert fast.n_events == slow.n_events > 10
    assert np.array_equal(fast.kinds, slow.kinds)
    np.testing.assert_allclose(fast.times, slow.times, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(fast.positions, slow.positions, rtol=1e-12, atol=1e-12)


def test_compiled_engine_unavailable_for_windowed_thinning():
    with pytest.raises(ValueError):
        simulate(ZigZagState(0.0, 1), 1.0, GAUSSIAN, RefreshPolicy.grad_proportional(1.0), RngStream(0), engine="compiled")


@pytest.mark.parametrize("engine", ["compiled", "python"])
@pytest.mark.parametrize("refresh", [ZERO, RefreshPolicy.constant(1.0), RefreshPolicy.grad_proportional(1.0)], ids=lambda r: r.tag)
def test_prefix_property(engine, refresh):
    start = ZigZagState(-5.0, 1)
    short = simulate(start, 300.0, CAUCHY, refresh, RngStream(17, 1), engine=engine)
    long = simulate(start, 3000.0, CAUCHY, refresh, RngStream(17, 1), engine=engine)
    n = short.n_events
    assert np.array_equal(long.times[:n], short.times)
    assert np.array_equal(long.positions[:n], short.positions)
    assert n == long.n_events or long.times[n] > 300.0


def test_csv_round_trip_is_bit_exact(tmp_path):
    skeleton = simulate(ZigZagState(-5.0, 1), 1e3, CAUCHY, RefreshPolicy.grad_proportional(1.0), RngStream(8, 2))
    path = tmp_path / "s.csv"
    skeleton.to_csv(path)
    text = path.read_text()
    assert "# target: cauchy" in text and "# seed: 8" in text and "time,kind,position" in text
    back = read_skeleton_csv(path)
    assert back.initial == skeleton.initial and back.horizon == skeleton.horizon
    assert np.array_equal(back.times, skeleton.times)
    assert np.array_equal(back.positions, skeleton.positions)
    assert np.array_equal(back.kinds, skeleton.kinds)
    back.to_csv(tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_text() == text


def test_event_cap():
    with pytest.raises(SimulationError, match="cap"):
        simulate(ZigZagState(0.0, 1), 1e4, CAUCHY, ZERO, RngStream(0), max_events=5)
    with pytest.raises(SimulationError, match="cap"):
        simulate(ZigZagState(0.0, 1), 1e4, CAUCHY, ZERO, RngStream(0), max_events=5, engine="python")


def test_thinning_bound_violation_is_an_error():
    liar = RefreshPolicy.custom(lambda x: 5.0, bound=1.0)
    with pytest.raises(ThinningBoundError):
        simulate(ZigZagState(0.0, 1), 100.0, CAUCHY, liar, RngStream(0))


def test_custom_refresh_with_bound():
    bump = RefreshPolicy.custom(lambda x: 1.0 / (1.0 + x * x), bound=1.0)
    skeleton = simulate(ZigZagState(0.0, 1), 500.0, CAUCHY, bump, RngStream(6))
    skeleton.check()
    assert np.any(skeleton.kinds == REFRESH)


def test_position_at_examples():
    skeleton = simulate(ZigZagState(0.0, 1), 50.0, CAUCHY, ZERO, RngStream(12))
    assert position_at(skeleton, 0.0) == 0.0
    t1 = skeleton.times[0]
    assert position_at(skeleton, t1) == pytest.approx(skeleton.positions[0], abs=1e-12)
    assert position_at(skeleton, 0.5 * t1) == pytest.approx(0.5 * t1)
    assert position_at(skeleton, skeleton.times).shape == skeleton.times.shape
    with pytest.raises(ValueError):
        position_at(skeleton, 51.0)


def test_skeleton_validation_and_concatenate():
    with pytest.raises(ValueError):
        Skeleton(ZigZagState(0.0, 1), np.array([2.0, 1.0]), np.array([0, 0]), np.array([2.0, 1.0]), 5.0)
    first = simulate(ZigZagState(0.0, 1), 20.0, CAUCHY, ZERO, RngStream(1))
    second = simulate(first.final_state, 30.0, CAUCHY, ZERO, RngStream(2))
    joined = concatenate(first, second)
    joined.check()
    assert joined.horizon == 50.0
    assert joined.n_events == first.n_events + second.n_events
    with pytest.raises(ValueError):
        concatenate(first, simulate(ZigZagState(1e3, 1), 1.0, CAUCHY, ZERO, RngStream(3)))


def test_gaussian_grad_refresh_long_run_occupation():
    # windowed thinning path: long-run fraction in [0, 1) matches Phi(1) - 1/2
    refresh = RefreshPolicy.grad_proportional(0.5)
    skeleton = simulate(ZigZagState(0.0, 1), 2e4, GAUSSIAN, refresh, RngStream(31))
    edges = np.linspace(0, 2e4, 41)
    batches = np.diff(interval_occupation(skeleton, 0.0, 1.0, edges)) / np.diff(edges)
    se = batches.std(ddof=1) / math.sqrt(batches.size)
    assert abs(batches.mean() - (stats.norm.cdf(1.0) - 0.5)) < 4 * se
