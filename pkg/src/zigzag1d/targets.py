"""Target distributions pi(x) ~ exp(-U(x)) on the real line, and refresh policies.

A target is described by its potential ``U`` (no normalising constant), the
derivative ``U'``, and enough structural information for exact event
simulation: the stationary points of ``U`` (which split the line into monotone
pieces) and, when available, a bound on ``|U'|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, stats

__all__ = [
    "Target",
    "RefreshPolicy",
    "TailReport",
    "make_student",
    "make_cauchy",
    "make_gaussian",
    "make_custom",
    "load_custom",
    "parse_target",
    "parse_refresh",
    "tail_probability_truth",
    "verify_tail_assumption",
]

RealFn = Callable[[float], float]


@dataclass(frozen=True, eq=False)
class Target:
    """Potential-based target.

    ``stationary_points`` must list every zero of ``U'``; ``mode_interval`` is
    their hull.  ``tail_inverse(y, theta, level)``, when given, returns the
    point z reached from ``y`` moving outward along ``theta`` on the last
    monotone branch, with ``U(z) - U(y) = level``.
    ``interval_bound(lo, hi)`` bounds ``|U'|`` on ``[lo, hi]``.
    """

    name: str
    potential: RealFn
    grad_potential: RealFn
    stationary_points: tuple[float, ...]
    tail_index: Optional[float] = None
    grad_bound: Optional[float] = None
    interval_bound: Optional[Callable[[float, float], float]] = None
    tail_inverse: Optional[Callable[[float, int, float], float]] = None
    tail_sf: Optional[RealFn] = field(default=None, repr=False)
    # (family, parameter) for the compiled simulation kernel
    family: Optional[tuple[str, float]] = None

    def __post_init__(self):
        if not self.stationary_points:
            raise ValueError("a target needs at least one stationary point (exp(-U) must be integrable)")
        pts = tuple(sorted(float(p) for p in self.stationary_points))
        object.__setattr__(self, "stationary_points", pts)
        if self.grad_bound is None and self.interval_bound is None:
            raise ValueError(
                f"target {self.name!r}: supply grad_bound or an interval_bound callback"
            )

    @property
    def mode_interval(self) -> tuple[float, float]:
        return self.stationary_points[0], self.stationary_points[-1]

    def grad_bound_on(self, lo: float, hi: float) -> float:
        """Upper bound for |U'| on [lo, hi]."""
        if self.interval_bound is not None:
            return float(self.interval_bound(lo, hi))
        return float(self.grad_bound)


def _student_tail_inverse(nu: float):
    def inverse(y: float, theta: int, level: float) -> float:
        # U(z) = U(y) + level on the outer branch:
        # 1 + z^2/nu = (1 + y^2/nu) * exp(2 level / (nu + 1))
        g = 2.0 * level / (nu + 1.0)
        return theta * math.sqrt(y * y * math.exp(g) + nu * math.expm1(g))

    return inverse


def make_student(dof: float) -> Target:
    """Student-t target with ``dof`` degrees of freedom (dof=1 is Cauchy)."""
    if not dof > 0 or not math.isfinite(dof):
        raise ValueError(f"degrees of freedom must be positive, got {dof}")
    nu = float(dof)
    half = 0.5 * (nu + 1.0)

    def potential(x):
        return half * np.log1p(np.square(x) / nu)

    def grad(x):
        return (nu + 1.0) * x / (nu + np.square(x))

    name = "cauchy" if nu == 1.0 else f"student:{nu:g}"
    return Target(
        name=name,
        potential=potential,
        grad_potential=grad,
        stationary_points=(0.0,),
        tail_index=nu,
        grad_bound=(nu + 1.0) / (2.0 * math.sqrt(nu)),
        tail_inverse=_student_tail_inverse(nu),
        tail_sf=lambda a: float(stats.t.sf(a, nu)),
        family=("student", nu),
    )


def make_cauchy() -> Target:
    target = make_student(1.0)
    # 1/2 - arctan(a)/pi, written without cancellation for large a
    return replace(target, tail_sf=lambda a: math.atan2(1.0, a) / math.pi)


def make_gaussian() -> Target:
    """Standard normal, U(x) = x^2/2."""
    return Target(
        name="gaussian",
        potential=lambda x: 0.5 * np.square(x),
        grad_potential=lambda x: x,
        stationary_points=(0.0,),
        tail_index=None,
        grad_bound=None,
        interval_bound=lambda lo, hi: max(abs(lo), abs(hi)),
        tail_inverse=lambda y, theta, level: theta * math.sqrt(y * y + 2.0 * level),
        tail_sf=lambda a: float(stats.norm.sf(a)),
        family=("gaussian", 0.0),
    )


# --------------------------------------------------------------------------
# custom targets from key-value files

_EXPR_NAMES = {
    name: getattr(np, name)
    for name in (
        "sqrt", "exp", "log", "log1p", "expm1", "abs", "sin", "cos", "tanh",
        "cosh", "sinh", "arctan", "sign", "square", "maximum", "minimum", "pi",
    )
}


def _compile_expr(expr: str, args: Sequence[str]):
    code = compile(expr, "<custom target>", "eval")
    allowed = set(_EXPR_NAMES) | set(args)
    unknown = set(code.co_names) - allowed
    if unknown:
        raise ValueError(f"unknown names in expression {expr!r}: {sorted(unknown)}")

    def fn(*values):
        scope = dict(_EXPR_NAMES)
        scope.update(zip(args, values))
        return eval(code, {"__builtins__": {}}, scope)

    return fn


def make_custom(
    potential: RealFn,
    grad_potential: RealFn,
    stationary_points: Sequence[float],
    *,
    grad_bound: Optional[float] = None,
    interval_bound: Optional[Callable[[float, float], float]] = None,
    tail_index: Optional[float] = None,
    name: str = "custom",
) -> Target:
    return Target(
        name=name,
        potential=potential,
        grad_potential=grad_potential,
        stationary_points=tuple(stationary_points),
        tail_index=tail_index,
        grad_bound=grad_bound,
        interval_bound=interval_bound,
    )


def _parse_optional_float(text: str | None) -> Optional[float]:
    if text is None or text.strip().lower() in ("", "none"):
        return None
    return float(text)


def load_custom(path: str | Path) -> Target:
    """Read a custom target from a ``key = value`` text file.

    Recognised keys: ``potential`` and ``grad`` (expressions in ``x``),
    ``stationary_points`` (comma separated), ``grad_bound``, ``interval_bound``
    (expression in ``lo`` and ``hi``), ``tail_index``, ``name``.
    """
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    for key in ("potential", "grad", "stationary_points"):
        if key not in entries:
            raise ValueError(f"{path}: missing required key {key!r}")
    bound_expr = entries.get("interval_bound")
    return make_custom(
        potential=_compile_expr(entries["potential"], ("x",)),
        grad_potential=_compile_expr(entries["grad"], ("x",)),
        stationary_points=[float(v) for v in entries["stationary_points"].split(",")],
        grad_bound=_parse_optional_float(entries.get("grad_bound")),
        interval_bound=_compile_expr(bound_expr, ("lo", "hi")) if bound_expr else None,
        tail_index=_parse_optional_float(entries.get("tail_index")),
        name=entries.get("name", f"custom:{path}"),
    )


def parse_target(tag: str) -> Target:
    """Resolve ``student:<dof>``, ``cauchy``, ``gaussian`` or ``custom:<path>``."""
    tag = tag.strip()
    if tag == "cauchy":
        return make_cauchy()
    if tag == "gaussian":
        return make_gaussian()
    if tag.startswith("student:"):
        dof = float(tag.split(":", 1)[1])
        return make_cauchy() if dof == 1.0 else make_student(dof)
    if tag.startswith("custom:"):
        return load_custom(tag.split(":", 1)[1])
    raise ValueError(f"unknown target tag {tag!r}")


# --------------------------------------------------------------------------
# refresh policies


@dataclass(frozen=True, eq=False)
class RefreshPolicy:
    """Extra flip rate gamma(x).

    ``kind`` is one of ``zero``, ``constant`` (gamma = value),
    ``grad`` (gamma = value * |U'(x)|) or ``custom`` (gamma = fn(x), with an
    optional global ``bound`` used for thinning).
    """

    kind: str
    value: float = 0.0
    fn: Optional[RealFn] = None
    bound: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "grad", "custom"):
            raise ValueError(f"unknown refresh kind {self.kind!r}")
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise ValueError("refresh parameter must be finite and nonnegative")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom refresh needs a rate function")

    @classmethod
    def zero(cls) -> "RefreshPolicy":
        return cls("zero")

    @classmethod
    def constant(cls, rate: float) -> "RefreshPolicy":
        return cls("constant", float(rate))

    @classmethod
    def grad_proportional(cls, c: float) -> "RefreshPolicy":
        return cls("grad", float(c))

    @classmethod
    def custom(cls, fn: RealFn, bound: Optional[float] = None) -> "RefreshPolicy":
        return cls("custom", fn=fn, bound=bound)

    @property
    def tag(self) -> str:
        if self.kind == "zero":
            return "zero"
        if self.kind == "constant":
            return f"const:{self.value:g}"
        if self.kind == "grad":
            return f"grad:{self.value:g}"
        return "custom"

    def rate(self, x, target: Target):
        """gamma(x); accepts scalars or arrays."""
        if self.kind == "zero":
            return np.zeros_like(np.asarray(x, dtype=float))[()]
        if self.kind == "constant":
            return np.full_like(np.asarray(x, dtype=float), self.value)[()]
        if self.kind == "grad":
            return self.value * np.abs(target.grad_potential(x))
        out = np.asarray(self.fn(x), dtype=float)
        return out[()]

    def global_bound(self, target: Target) -> Optional[float]:
        """Finite sup of gamma over the line, or None if not known."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.value
        if self.kind == "grad":
            if self.value == 0.0:
                return 0.0
            return None if target.grad_bound is None else self.value * target.grad_bound
        return self.bound

    def bound_on(self, lo: float, hi: float, target: Target) -> Optional[float]:
        """Bound on gamma over positions [lo, hi]."""
        if self.kind == "grad":
            return self.value * target.grad_bound_on(lo, hi)
        return self.global_bound(target)


def parse_refresh(tag: str) -> RefreshPolicy:
    """Resolve ``zero``, ``const:<rate>`` or ``grad:<c>``."""
    tag = tag.strip()
    if tag == "zero":
        return RefreshPolicy.zero()
    kind, _, value = tag.partition(":")
    if kind in ("const", "constant") and value:
        return RefreshPolicy.constant(float(value))
    if kind == "grad" and value:
        return RefreshPolicy.grad_proportional(float(value))
    raise ValueError(f"unknown refresh tag {tag!r}")


# --------------------------------------------------------------------------
# reference quantities


def tail_probability_truth(target: Target, a: float) -> float:
    """pi([a, inf)) for the normalised target."""
    if a == math.inf:
        return 0.0
    if a == -math.inf:
        return 1.0
    if target.tail_sf is not None:
        return float(target.tail_sf(a))
    return _quadrature_tail(target, a)


def _quadrature_tail(target: Target, a: float) -> float:
    # shift by U at the lowest stationary point to keep exp(-U) in range
    u_min = min(float(target.potential(p)) for p in target.stationary_points)

    def density(x):
        return math.exp(u_min - float(target.potential(x)))

    pieces = sorted(set(target.stationary_points) | {a})
    total = 0.0
    upper = 0.0
    edges = [-math.inf, *pieces, math.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        value, err = integrate.quad(density, lo, hi, epsabs=0.0, epsrel=1e-12, limit=500)
        if not math.isfinite(value) or err > 1e-9 * max(abs(value), 1e-300) + 1e-14:
            raise ArithmeticError(f"quadrature did not converge on [{lo}, {hi}] (err {err:.3g})")
        total += value
        if lo >= a:
            upper += value
    return upper / total


@dataclass
class TailReport:
    nu: float
    min_radius: Optional[float]
    violations: list[float]

    @property
    def satisfied(self) -> bool:
        return self.min_radius is not None


def verify_tail_assumption(target: Target, nu: float, radius_grid: Sequence[float]) -> TailReport:
    """Find the smallest grid radius R with |U'(x)| |x| >= 1 + nu for all grid |x| >= R.

    Both signs of x are sampled.  When the outermost radius violates the
    inequality no R exists and the report lists every violating x.
    """
    radii = np.asarray(radius_grid, dtype=float)
    if radii.size == 0 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ValueError("radius grid must be nonempty, positive and increasing")
    ok = np.ones(radii.size, dtype=bool)
    bad_x: list[float] = []
    for sign in (-1.0, 1.0):
        x = sign * radii
        good = np.abs(target.grad_potential(x)) * radii >= 1.0 + nu
        ok &= good
        bad_x.extend(x[~good].tolist())
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return TailReport(nu, float(radii[0]), [])
    last = bad[-1]
    if last == radii.size - 1:
        return TailReport(nu, None, sorted(bad_x))
    return TailReport(nu, float(radii[last + 1]), [])
