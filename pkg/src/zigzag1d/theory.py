"""Polynomial-ergodicity machinery for the 1-D Zig-Zag process.

Lyapunov function V(x, theta) = exp(beta U(x) + delta sgn(x) theta), the
generator, the drift ratio LV / V^a, a grid certifier for the drift condition
LV <= K - c V^a, the admissible refresh threshold M(k), the rate transforms
for f(u) = c u^a, and upper/lower total-variation bounds.

Everything is evaluated in log-space where V can overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from .targets import RefreshPolicy, Target, verify_tail_assumption
from .zigzag import ZigZagState

__all__ = [
    "DomainError",
    "DriftParams",
    "DriftReport",
    "GridSpec",
    "log_lyapunov",
    "lyapunov",
    "generator_apply",
    "generator_of_lyapunov",
    "drift_ratio",
    "log_drift_ratio",
    "drift_ratio_bound",
    "beta_candidates",
    "certify_drift",
    "largest_certified_scale",
    "refresh_threshold_M",
    "HairerTransforms",
    "hairer_transforms",
    "tv_upper_bound",
    "student_tail_constant",
    "tv_lower_bound_student",
    "student_two_sided_tail",
]


class DomainError(ValueError):
    """A mathematical precondition does not hold for the given parameters."""


@dataclass(frozen=True)
class DriftParams:
    """Parameters of the Lyapunov certificate.

    ``k`` is the target polynomial order, ``nu`` the tail level used in the
    gradient-growth condition; ``a = k / (1 + k)``.  ``beta`` and ``delta`` are
    chosen by :func:`certify_drift` when left as ``None``.
    """

    k: float
    nu: float
    beta: Optional[float] = None
    delta: Optional[float] = None
    eta: float = 0.1

    def __post_init__(self):
        if not self.k > 0:
            raise DomainError("k must be positive")
        if not self.nu > 0:
            raise DomainError("nu must be positive")
        if self.beta is not None and not 0 < self.beta < 1:
            raise DomainError("beta must lie in (0, 1)")
        if self.delta is not None and not self.delta > 0:
            raise DomainError("delta must be positive")

    @property
    def a(self) -> float:
        return self.k / (1.0 + self.k)

    @classmethod
    def for_target(cls, target: Target, k: float, slack: float = 0.01, **kwargs) -> "DriftParams":
        """Use ``nu = tail_index - slack``: Student tails meet the growth bound only below their index."""
        if target.tail_index is None:
            raise DomainError(f"target {target.name!r} has no tail index; pass nu explicitly")
        return cls(k=k, nu=target.tail_index - slack, **kwargs)

    def _resolved(self) -> tuple[float, float]:
        if self.beta is None or self.delta is None:
            raise DomainError("beta and delta are not set; run certify_drift or pass them")
        return self.beta, self.delta


def _sgn(x):
    return np.sign(x)


def log_lyapunov(x, theta, params: DriftParams, target: Target):
    """log V(x, theta) = beta U(x) + delta sgn(x) theta, with sgn(0) = 0."""
    beta, delta = params._resolved()
    return beta * target.potential(x) + delta * _sgn(x) * theta


def lyapunov(x, theta, params: DriftParams, target: Target):
    return np.exp(log_lyapunov(x, theta, params, target))


def generator_apply(f_value_flip, f_deriv, state: ZigZagState, target: Target, refresh: RefreshPolicy):
    """L f(x, theta) = theta f'(x, theta) + lambda(x, theta) (f(x, -theta) - f(x, theta)).

    ``f_value_flip`` is the pair ``(f(x, theta), f(x, -theta))``.
    """
    f_here, f_flip = f_value_flip
    x, theta = state.x, state.theta
    rate = max(theta * float(target.grad_potential(x)), 0.0) + float(refresh.rate(x, target))
    return theta * f_deriv + rate * (f_flip - f_here)


def _drift_bracket(x, theta, params, target, refresh):
    """L V / V at (x, theta)."""
    beta, delta = params._resolved()
    grad = target.grad_potential(x)
    rate = np.maximum(theta * grad, 0.0) + refresh.rate(x, target)
    return theta * beta * grad + rate * np.expm1(-2.0 * theta * _sgn(x) * delta)


def generator_of_lyapunov(x, theta, params: DriftParams, target: Target, refresh: RefreshPolicy):
    """Closed-form L V(x, theta)."""
    return lyapunov(x, theta, params, target) * _drift_bracket(x, theta, params, target, refresh)


def log_drift_ratio(x, theta, params: DriftParams, target: Target, refresh: RefreshPolicy):
    """``(sign, log|L V / V^a|)`` of the exact drift ratio."""
    bracket = np.asarray(_drift_bracket(x, theta, params, target, refresh), dtype=float)
    log_v = log_lyapunov(x, theta, params, target)
    with np.errstate(divide="ignore"):
        log_abs = (1.0 - params.a) * log_v + np.log(np.abs(bracket))
    return np.sign(bracket), log_abs


def drift_ratio(x, theta, params: DriftParams, target: Target, refresh: RefreshPolicy):
    """Exact L V / V^a (may be +-inf where V^(1-a) overflows)."""
    sign, log_abs = log_drift_ratio(x, theta, params, target, refresh)
    with np.errstate(over="ignore"):
        return sign * np.exp(log_abs)


def drift_ratio_bound(x, theta, params: DriftParams, target: Target, refresh: RefreshPolicy):
    """Upper bound V^(1-a) |U'| max(up, down) valid where sgn U' = sgn x.

    up   = beta + (gamma/|U'| + 1)(exp(-2 delta) - 1)
    down = -beta + (gamma/|U'|)(exp(2 delta) - 1)
    Both are multiplied through by |U'| so that U' = 0 is harmless.
    """
    beta, delta = params._resolved()
    slope = np.abs(target.grad_potential(x))
    gamma = refresh.rate(x, target)
    up = beta * slope + (gamma + slope) * math.expm1(-2.0 * delta)
    down = -beta * slope + gamma * math.expm1(2.0 * delta)
    with np.errstate(over="ignore"):
        scale = np.exp((1.0 - params.a) * log_lyapunov(x, theta, params, target))
    return scale * np.maximum(up, down)


# --------------------------------------------------------------------------
# drift certificate


@dataclass(frozen=True)
class GridSpec:
    """Log-spaced radii for the drift sweep (both signs of x, both velocities)."""

    lo: float = 1e-2
    hi: float = 1e6
    per_decade: int = 512

    def radii(self) -> np.ndarray:
        decades = math.log10(self.hi) - math.log10(self.lo)
        n = int(round(decades * self.per_decade)) + 1
        return np.logspace(math.log10(self.lo), math.log10(self.hi), n)


@dataclass
class DriftReport:
    params: DriftParams
    compact_radius: float
    sup_ratio_outside: float
    c_margin: float
    K_inside: float
    certified: bool
    diagnostic: str = ""
    table: Optional[np.ndarray] = field(default=None, repr=False)

    def rows(self):
        """``(x, theta, ratio, bound)`` rows of the sweep."""
        return [] if self.table is None else self.table.tolist()


def beta_candidates(params: DriftParams) -> list[tuple[float, float]]:
    """(beta, delta) pairs tried by the certifier, in order.

    The first pair is the explicit choice beta = (1+eta)(1+k)/(1+nu),
    delta = -(1+eta) log(1-beta)/2 (when beta < 1); then beta = 1 - 2^-j,
    j = 1..20, with delta = -1.05 log(1-beta)/2, keeping those with
    beta (1-a)(1+nu) > 1.
    """
    if params.beta is not None:
        delta = params.delta if params.delta is not None else -0.525 * math.log1p(-params.beta)
        return [(params.beta, delta)]
    a, nu, eta = params.a, params.nu, params.eta
    out = []
    beta = (1.0 + eta) * (1.0 + params.k) / (1.0 + nu)
    if beta < 1.0:
        out.append((beta, -0.5 * (1.0 + eta) * math.log1p(-beta)))
    for j in range(1, 21):
        beta = 1.0 - 2.0 ** -j
        if beta * (1.0 - a) * (1.0 + nu) > 1.0:
            out.append((beta, -0.525 * math.log1p(-beta)))
    return out


def _sweep(params, target, refresh, radii, assumption_ok):
    xs, thetas, signs, logs = [], [], [], []
    for side in (-1.0, 1.0):
        x = side * radii
        for theta in (-1, 1):
            sign, log_abs = log_drift_ratio(x, theta, params, target, refresh)
            xs.append(x)
            thetas.append(np.full(x.shape, theta))
            signs.append(sign)
            logs.append(log_abs)
    x = np.stack(xs)
    theta = np.stack(thetas)
    sign = np.stack(signs)
    log_abs = np.stack(logs)
    # a radius is "good" if the growth condition and negativity hold at +-r, both theta
    good = assumption_ok & np.all(sign < 0, axis=0)
    return x, theta, sign, log_abs, good


def _evaluate_candidate(params, target, refresh, radii, assumption_ok, keep_table):
    x, theta, sign, log_abs, good = _sweep(params, target, refresh, radii, assumption_ok)
    finite = not np.any(np.isnan(log_abs))
    bad = np.flatnonzero(~good)
    with np.errstate(over="ignore"):
        ratio = sign * np.exp(log_abs)
    if bad.size and bad[-1] == radii.size - 1:
        sup_out = float(np.max(ratio[:, -1]))
        report = DriftReport(params, math.inf, sup_out, -sup_out, math.nan, False)
        report.diagnostic = f"drift ratio not negative at the outermost radius {radii[-1]:g}"
    else:
        start = 0 if bad.size == 0 else bad[-1] + 1
        radius = float(radii[start])
        sup_out = float(np.max(ratio[:, start:]))
        c_margin = -sup_out
        inside = slice(0, start)
        if start == 0:
            k_inside = 0.0
        else:
            log_v = log_lyapunov(x[:, inside], theta[:, inside], params, target)
            lv = ratio[:, inside] * np.exp(params.a * log_v)
            k_inside = float(np.max(lv + 0.5 * c_margin * np.exp(params.a * log_v)))
        certified = bool(sup_out < 0 and finite)
        report = DriftReport(params, radius, sup_out, c_margin, k_inside, certified)
        if not finite:
            report.diagnostic = "non-finite drift ratio on the grid"
    if keep_table:
        bound = drift_ratio_bound(x, theta, params, target, refresh)
        report.table = np.column_stack([x.ravel(), theta.ravel(), ratio.ravel(), bound.ravel()])
    return report


def certify_drift(
    params: DriftParams,
    target: Target,
    refresh: RefreshPolicy,
    grid: GridSpec = GridSpec(),
    *,
    keep_table: bool = False,
) -> DriftReport:
    """Check LV <= K - c V^a on a log grid, searching (beta, delta) if not given.

    Raises :class:`DomainError` if ``k >= nu`` or the gradient-growth
    condition fails at level ``nu``.  A failed certificate is returned with
    ``certified=False`` and a diagnostic.
    """
    if not params.k < params.nu:
        raise DomainError(f"need k < nu, got k={params.k}, nu={params.nu}")
    radii = grid.radii()
    tail = verify_tail_assumption(target, params.nu, radii)
    if not tail.satisfied:
        raise DomainError(
            f"|U'(x)||x| >= 1 + nu fails up to |x| = {radii[-1]:g} at nu={params.nu}"
        )
    assumption_ok = radii >= tail.min_radius
    candidates = beta_candidates(params)
    if not candidates:
        raise DomainError("no beta with beta (1-a)(1+nu) > 1 in the search lattice")
    first = None
    for beta, delta in candidates:
        trial = replace(params, beta=beta, delta=delta)
        report = _evaluate_candidate(trial, target, refresh, radii, assumption_ok, keep_table)
        if report.certified:
            return report
        first = first or report
    first.diagnostic = (
        f"no (beta, delta) among {len(candidates)} candidates certifies; first candidate: "
        + first.diagnostic
    )
    return first


def largest_certified_scale(
    params: DriftParams,
    target: Target,
    grid: GridSpec = GridSpec(),
    *,
    upper: float = 4.0,
    tol: float = 1e-6,
) -> float:
    """Largest s for which gamma = s |U'| is certified (bisection; certification is monotone in s)."""

    def ok(s):
        return certify_drift(params, target, RefreshPolicy.grad_proportional(s), grid).certified

    if not ok(0.0):
        return 0.0
    lo, hi = 0.0, upper
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# --------------------------------------------------------------------------
# closed-form rates and bounds


def refresh_threshold_M(k: float, nu: float, eta: float) -> float:
    """Largest admissible limit of gamma/|U'| for polynomial order k."""
    if not (k > 0 and nu > 0 and eta > 0):
        raise DomainError("k, nu and eta must be positive")
    if not k < nu:
        raise DomainError(f"need k < nu, got k={k}, nu={nu}")
    q = (1.0 + k) / (1.0 + nu) * (1.0 + eta)
    base = 1.0 - q
    if not 0.0 < base < 1.0:
        raise DomainError(
            f"1 - (1+k)(1+eta)/(1+nu) = {base:.6g} is outside (0, 1); eta={eta} is too large for k={k}"
        )
    power = base ** (1.0 + eta)
    return (q - eta) * power / (1.0 - power)


class HairerTransforms(NamedTuple):
    H: Callable
    H_inv: Callable
    f_of_H_inv: Callable


def hairer_transforms(c: float, a: float) -> HairerTransforms:
    """For f(u) = c u^a: H(u) = int_1^u ds/f(s), its inverse, and f(H^-1(t))."""
    if not c > 0:
        raise DomainError("c must be positive")
    if not 0 < a < 1:
        raise DomainError("a must lie in (0, 1)")
    b = 1.0 - a

    def H(u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 1):
            raise DomainError("H is defined for u >= 1")
        return (np.expm1(b * np.log(u)) / (c * b))[()]

    def log_H_inv(t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("H^-1 is defined for t >= 0")
        return np.log1p(c * b * t) / b

    def H_inv(t):
        return np.exp(log_H_inv(t))[()]

    def f_of_H_inv(t):
        return (c * np.exp(a * log_H_inv(t)))[()]

    return HairerTransforms(H, H_inv, f_of_H_inv)


def tv_upper_bound(t, state: ZigZagState, params: DriftParams, B: float, target: Target):
    """min(1, B V(x, theta) / t^(1+k) + B / t^k)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    if B == 0:
        return np.zeros_like(t)[()]
    log_v = float(log_lyapunov(state.x, state.theta, params, target))
    log_t = np.log(t)
    log_b = math.log(B)
    first = log_b + log_v - (1.0 + params.k) * log_t
    second = log_b - params.k * log_t
    total = np.logaddexp(first, second)
    return np.exp(np.minimum(total, 0.0))[()]


def _student_log_ratio(x, nu):
    """log(pi(x) |x|^(nu+1)) for the normalised Student density."""
    return stats.t.logpdf(x, nu) + (nu + 1.0) * np.log(np.abs(x))


def student_tail_constant(nu: float, eps: float = 0.01) -> tuple[float, float]:
    """``(C0, K)`` with pi(x) >= C0 |x|^(-nu-1) for all |x| >= K.

    The limit of pi(x)|x|^(nu+1) is read off far in the tail, C0 is
    ``(1 - eps)`` times it, and K is where the (increasing) ratio crosses C0.
    """
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    scan = np.logspace(-2, 12, 1401)
    log_ratio = _student_log_ratio(scan, nu)
    if np.any(np.diff(log_ratio) < -1e-12):
        raise ArithmeticError("tail ratio is not increasing on the scan grid")
    log_limit = float(log_ratio[-1])
    log_c0 = log_limit + math.log1p(-eps)
    above = np.flatnonzero(log_ratio >= log_c0)
    j = int(above[0])
    if j == 0:
        return math.exp(log_c0), float(scan[0])
    root = optimize.brentq(lambda r: _student_log_ratio(r, nu) - log_c0, scan[j - 1], scan[j], xtol=1e-14)
    # step just past the crossing so the inequality holds at K itself
    return math.exp(log_c0), float(root * (1.0 + 1e-9))


def student_two_sided_tail(t, nu: float):
    """pi({|x| > t}) for the Student law."""
    return 2.0 * stats.t.sf(t, nu)


def tv_lower_bound_student(t, nu: float, eps: float = 0.01):
    """(2 C0 / nu) t^-nu, a lower bound on the TV distance at time t from (0, +1)."""
    c0, K = student_tail_constant(nu, eps)
    t = np.asarray(t, dtype=float)
    if np.any(t <= K):
        raise DomainError(f"the lower bound needs t > K = {K:.6g}")
    return (2.0 * c0 / nu * t ** (-nu))[()]
