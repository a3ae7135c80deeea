"""Replicate farms: MSE curves, convergence-rate probes, stationarity checks."""
from __future__ import annotations

import configparser
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .estimators import IndicatorQuery, interval_occupation, occupation_curve
from .rng import RngStream
from .targets import RefreshPolicy, Target, parse_refresh, parse_target, tail_probability_truth
from .theory import DriftParams, log_lyapunov
from .zigzag import ZigZagState, position_at, simulate

__all__ = [
    "ExperimentConfig",
    "MseCurve",
    "RateFit",
    "StationarityRow",
    "default_checkpoints",
    "default_threads",
    "load_experiments",
    "run_mse",
    "replicate_positions",
    "discrepancy_series",
    "rate_slope",
    "fit_B",
    "stationarity_sweep",
]

THREADS_ENV = "ZIGZAG_THREADS"


def default_threads() -> int:
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def default_checkpoints(horizon: float, n: int = 200) -> np.ndarray:
    """``n`` log-spaced times in ``[1, horizon]``."""
    times = np.logspace(0.0, math.log10(horizon), n)
    times[-1] = horizon  # logspace can overshoot by an ulp
    return times


@dataclass
class ExperimentConfig:
    target_tag: str
    refresh_tag: str
    initial: ZigZagState
    horizon: float
    replicates: int
    checkpoints: np.ndarray
    seed: int
    query: IndicatorQuery
    threads: int = 1

    def __post_init__(self):
        self.checkpoints = np.asarray(self.checkpoints, dtype=float)
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        cp = self.checkpoints
        if cp.size == 0 or cp[0] <= 0 or cp[-1] > self.horizon or np.any(np.diff(cp) <= 0):
            raise ValueError("checkpoints must be increasing inside (0, horizon]")
        # resolve eagerly so that bad tags fail before any simulation
        self.target
        self.refresh

    @property
    def target(self) -> Target:
        return parse_target(self.target_tag)

    @property
    def refresh(self) -> RefreshPolicy:
        return parse_refresh(self.refresh_tag)


def load_experiments(path: str | Path | None = None, **overrides) -> list[ExperimentConfig]:
    """Read an ``[experiment]`` section; ``refresh`` may list several policies.

    Keys: target, refresh, start, horizon, replicates, seed, threshold,
    checkpoints (count of log-spaced points, or a comma list of times),
    threads.  Non-None keyword overrides win over the file.
    """
    values: dict[str, str] = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        with open(path) as handle:
            parser.read_file(handle)
        if "experiment" not in parser:
            raise ValueError(f"{path}: missing [experiment] section")
        values.update(parser["experiment"])
    values.update({k: str(v) for k, v in overrides.items() if v is not None})
    missing = {"target", "refresh", "start", "horizon", "replicates", "seed"} - values.keys()
    if missing:
        raise ValueError(f"missing experiment settings: {sorted(missing)}")
    horizon = float(values["horizon"])
    cp_text = values.get("checkpoints", "200").strip()
    if "," in cp_text:
        checkpoints = np.array([float(v) for v in cp_text.split(",")])
    else:
        checkpoints = default_checkpoints(horizon, int(cp_text))
    common = dict(
        target_tag=values["target"].strip(),
        initial=ZigZagState.parse(values["start"]),
        horizon=horizon,
        replicates=int(values["replicates"]),
        checkpoints=checkpoints,
        seed=int(values["seed"]),
        query=IndicatorQuery(float(values.get("threshold", "5"))),
        threads=int(values.get("threads", default_threads())),
    )
    return [ExperimentConfig(refresh_tag=tag.strip(), **common) for tag in values["refresh"].split(",")]


# --------------------------------------------------------------------------
# replicate farming


def _run_replicates(config: ExperimentConfig, start: int, stop: int, kind: str, extra) -> np.ndarray:
    target, refresh = config.target, config.refresh
    rows = []
    for r in range(start, stop):
        skeleton = simulate(config.initial, config.horizon, target, refresh, RngStream(config.seed, r))
        if kind == "occupation":
            rows.append(occupation_curve(skeleton, config.query, config.checkpoints))
        else:
            rows.append(position_at(skeleton, extra))
    return np.vstack(rows)


def _farm(config: ExperimentConfig, kind: str, extra=None) -> np.ndarray:
    """Per-replicate rows, in replicate order regardless of ``threads``."""
    n = config.replicates
    workers = min(max(1, config.threads), n)
    if workers == 1:
        return _run_replicates(config, 0, n, kind, extra)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    context = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(workers, mp_context=context) as pool:
        futures = [
            pool.submit(_run_replicates, config, int(lo), int(hi), kind, extra)
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        return np.vstack([f.result() for f in futures])


@dataclass
class MseCurve:
    checkpoints: np.ndarray
    mse: np.ndarray
    stderr: np.ndarray
    truth: float

    def to_csv(self, path: str | Path) -> None:
        lines = ["time,mse,stderr"]
        for t, m, s in zip(self.checkpoints.tolist(), self.mse.tolist(), self.stderr.tolist()):
            lines.append(f"{t:.17g},{m:.17g},{s:.17g}")
        Path(path).write_text("\n".join(lines) + "\n")


def run_mse(config: ExperimentConfig) -> MseCurve:
    """Mean squared error of the occupation estimator of pi([a, inf)) across replicates.

    Replicate r uses stream ``(seed, r)``.
    """
    truth = tail_probability_truth(config.target, config.query.a)
    estimates = _farm(config, "occupation")
    squared = (estimates - truth) ** 2
    mse = squared.mean(axis=0)
    if config.replicates > 1:
        stderr = squared.std(axis=0, ddof=1) / math.sqrt(config.replicates)
    else:
        stderr = np.zeros_like(mse)
    return MseCurve(config.checkpoints.copy(), mse, stderr, truth)


def replicate_positions(config: ExperimentConfig) -> np.ndarray:
    """X_t at every checkpoint, one row per replicate."""
    return _farm(config, "positions", config.checkpoints)


def discrepancy_series(positions: np.ndarray, target: Target, thresholds: Sequence[float]) -> np.ndarray:
    """D(t) = max_a |P_hat(X_t >= a) - pi([a, inf))|, a lower bound on TV at each t."""
    thresholds = np.asarray(thresholds, dtype=float)
    truth = np.array([tail_probability_truth(target, a) for a in thresholds])
    frac = (positions[:, :, None] >= thresholds).mean(axis=0)
    return np.abs(frac - truth).max(axis=1)


@dataclass
class RateFit:
    times: np.ndarray
    D: np.ndarray
    slope: float
    intercept: float
    ci: tuple[float, float]
    n_used: int
    noise_floor: float
    conclusive: bool
    message: str = ""

    def to_csv(self, path: str | Path) -> None:
        lines = ["time,D"] + [f"{t:.17g},{d:.17g}" for t, d in zip(self.times.tolist(), self.D.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")


def rate_slope(
    config: ExperimentConfig,
    thresholds: Sequence[float],
    fit_range: Optional[tuple[float, float]] = None,
    *,
    level: float = 0.95,
) -> RateFit:
    """Least-squares slope of log D(t) against log t.

    Only checkpoints inside ``fit_range`` (default: the upper half of the
    checkpoint range on a log scale) with D(t) above ``2/sqrt(replicates)``
    enter the fit; fewer than four such points make the fit inconclusive.
    """
    positions = replicate_positions(config)
    D = discrepancy_series(positions, config.target, thresholds)
    times = config.checkpoints
    floor = 2.0 / math.sqrt(config.replicates)
    if fit_range is None:
        fit_range = (math.sqrt(times[0] * times[-1]), times[-1])
    use = (times >= fit_range[0]) & (times <= fit_range[1]) & (D > floor)
    n = int(use.sum())
    if n < 4:
        return RateFit(times, D, math.nan, math.nan, (math.nan, math.nan), n, floor, False,
                       f"inconclusive: {n} checkpoints above the noise floor {floor:.3g}")
    fit = stats.linregress(np.log(times[use]), np.log(D[use]))
    half = stats.t.ppf(0.5 + level / 2, n - 2) * fit.stderr
    ci = (fit.slope - half, fit.slope + half)
    return RateFit(times, D, float(fit.slope), float(fit.intercept), ci, n, floor, True)


def fit_B(
    series: Sequence[float],
    times: Sequence[float],
    params: DriftParams,
    state: ZigZagState,
    target: Target,
) -> float:
    """Smallest B with B (V/t^(1+k) + 1/t^k) >= series(t) at every given time."""
    series = np.asarray(series, dtype=float)
    times = np.asarray(times, dtype=float)
    log_v = float(log_lyapunov(state.x, state.theta, params, target))
    log_t = np.log(times)
    log_shape = np.logaddexp(log_v - (1.0 + params.k) * log_t, -params.k * log_t)
    if not np.any(series > 0):
        return 0.0
    return float(np.max(series * np.exp(-log_shape)))


# --------------------------------------------------------------------------
# stationarity


@dataclass
class StationarityRow:
    lo: float
    hi: float
    estimate: float
    truth: float
    stderr: float

    @property
    def z(self) -> float:
        return (self.estimate - self.truth) / self.stderr if self.stderr > 0 else math.inf


def stationarity_sweep(
    target: Target,
    refresh: RefreshPolicy,
    horizon: float,
    seed: int,
    intervals: Sequence[tuple[float, float]],
    *,
    initial: ZigZagState = ZigZagState(0.0, 1),
    batches: int = 50,
    stream_id: int = 0,
) -> list[StationarityRow]:
    """Time-average occupation of each ``[lo, hi)`` over one long run.

    Standard errors come from non-overlapping batch means.
    """
    skeleton = simulate(initial, horizon, target, refresh, RngStream(seed, stream_id))
    edges = np.linspace(0.0, horizon, batches + 1)
    rows = []
    for lo, hi in intervals:
        cumulative = interval_occupation(skeleton, lo, hi, edges)
        batch_means = np.diff(cumulative) / np.diff(edges)
        truth = tail_probability_truth(target, lo) - tail_probability_truth(target, hi)
        stderr = float(batch_means.std(ddof=1) / math.sqrt(batches))
        rows.append(StationarityRow(lo, hi, float(cumulative[-1] / horizon), truth, stderr))
    return rows
