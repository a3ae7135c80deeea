"""One-dimensional Zig-Zag sampling on heavy-tailed targets.

Exact event simulation, exact path estimators, and numerical checks of the
polynomial-ergodicity drift machinery.
"""
__version__ = "0.1.0"

from .estimators import IndicatorQuery, occupation_curve, occupation_time, time_average
from .rng import RngStream
from .targets import (
    RefreshPolicy,
    Target,
    make_cauchy,
    make_gaussian,
    make_student,
    parse_refresh,
    parse_target,
    tail_probability_truth,
    verify_tail_assumption,
)
from .theory import DriftParams, certify_drift, refresh_threshold_M
from .zigzag import Skeleton, ZigZagState, first_event_time, position_at, simulate, switching_rate

__all__ = [
    "DriftParams",
    "IndicatorQuery",
    "RefreshPolicy",
    "RngStream",
    "Skeleton",
    "Target",
    "ZigZagState",
    "certify_drift",
    "first_event_time",
    "make_cauchy",
    "make_gaussian",
    "make_student",
    "occupation_curve",
    "occupation_time",
    "parse_refresh",
    "parse_target",
    "position_at",
    "refresh_threshold_M",
    "simulate",
    "switching_rate",
    "tail_probability_truth",
    "time_average",
    "verify_tail_assumption",
]
