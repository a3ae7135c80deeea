"""Command-line front end: ``zigzag {simulate,mse,drift-check,rate,bounds}``.

Exit codes: 0 success (or certified), 1 runtime failure or not certified,
2 usage error, 3 domain precondition failure.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    default_threads,
    fit_B,
    load_experiments,
    rate_slope,
    run_mse,
)
from .rng import RngStream
from .targets import parse_refresh, parse_target
from .theory import (
    DomainError,
    DriftParams,
    GridSpec,
    certify_drift,
    hairer_transforms,
    refresh_threshold_M,
    student_tail_constant,
    student_two_sided_tail,
    tv_lower_bound_student,
)
from .zigzag import SimulationError, ZigZagState, simulate

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2, 3

# flags whose values may legitimately start with '-'
_SIGNED_VALUE_FLAGS = ("--start", "--thresholds", "--times", "--k-grid")


class UsageError(Exception):
    pass


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _write_rows(path: Path, header: str, rows) -> Path:
    lines = [header] + [",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_manifest(out_dir: Path, subcommand: str, config: dict, seed, artifacts, started: float) -> Path:
    """Written after every other artifact; its presence marks a completed run."""
    path = out_dir / "manifest.txt"
    lines = [
        f"subcommand = {subcommand}",
        f"version = {__version__}",
        f"seed = {seed}",
        f"started_at = {datetime.fromtimestamp(started, timezone.utc).isoformat()}",
        f"wall_clock_seconds = {time.time() - started:.3f}",
        f"artifacts = {', '.join(str(p) for p in artifacts)}",
    ]
    lines += [f"config.{key} = {value}" for key, value in config.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def _policy_slug(tag: str) -> str:
    return tag.replace(":", "-")


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    target = parse_target(args.target)
    refresh = parse_refresh(args.refresh)
    start = ZigZagState.parse(args.start)
    skeleton = simulate(start, args.horizon, target, refresh, RngStream(args.seed, args.stream))
    out = Path(args.out)
    skeleton.to_csv(out)
    print(f"{skeleton.n_events} events on [0, {args.horizon:g}] written to {out}")
    return EXIT_OK


def cmd_mse(args) -> int:
    started = time.time()
    configs = load_experiments(
        args.config,
        target=args.target, refresh=args.refresh, start=args.start, horizon=args.horizon,
        replicates=args.replicates, seed=args.seed, threshold=args.threshold,
        checkpoints=args.checkpoints, threads=args.threads,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for config in configs:
        curve = run_mse(config)
        path = out_dir / f"mse_{_policy_slug(config.refresh_tag)}.csv"
        curve.to_csv(path)
        artifacts.append(path)
        print(f"{config.refresh_tag:>10}: final MSE {curve.mse[-1]:.4g} +- {curve.stderr[-1]:.2g} "
              f"(truth {curve.truth:.6g}) -> {path}")
    if args.gnuplot:
        plots = ", ".join(f"'{p.name}' using 1:2 with lines title '{c.refresh_tag}'"
                          for p, c in zip(artifacts, configs))
        script = out_dir / "mse.gp"
        script.write_text(
            "set datafile separator ','\nset logscale xy\nset key autotitle columnhead\n"
            "set xlabel 'time'\nset ylabel 'MSE'\n"
            f"plot {plots}\n"
        )
        artifacts.append(script)
    first = configs[0]
    resolved = {
        "target": first.target_tag,
        "refresh": ",".join(c.refresh_tag for c in configs),
        "start": f"{first.initial.x:g},{first.initial.theta:+d}",
        "horizon": first.horizon,
        "replicates": first.replicates,
        "threshold": first.query.a,
        "checkpoints": first.checkpoints.size,
    }
    _write_manifest(out_dir, "mse", resolved, first.seed, artifacts, started)
    return EXIT_OK


def _drift_params(target, args) -> DriftParams:
    nu = args.nu
    if nu is None:
        if target.tail_index is None:
            raise UsageError(f"target {target.name} has no tail index; pass --nu")
        nu = target.tail_index - args.slack
    return DriftParams(k=args.k, nu=nu, beta=args.beta, delta=args.delta, eta=args.eta)


def cmd_drift_check(args) -> int:
    target = parse_target(args.target)
    refresh = parse_refresh(args.refresh)
    params = _drift_params(target, args)
    grid = GridSpec(args.grid_lo, args.grid_hi, args.per_decade)
    report = certify_drift(params, target, refresh, grid, keep_table=args.csv is not None)
    p = report.params
    print(f"target            {target.name}")
    print(f"refresh           {refresh.tag}")
    print(f"k, a, nu          {p.k:g}, {p.a:.6g}, {p.nu:g}")
    print(f"beta, delta       {p.beta:.6g}, {p.delta:.6g}")
    print(f"compact radius    {report.compact_radius:.6g}")
    print(f"sup ratio outside {report.sup_ratio_outside:.6g}")
    print(f"margin c'         {report.c_margin:.6g}")
    print(f"K inside          {report.K_inside:.6g}")
    print(f"certified         {report.certified}")
    if report.diagnostic:
        print(f"diagnostic        {report.diagnostic}")
    if args.csv is not None:
        rows = [(float(x), int(t), float(r), float(b)) for x, t, r, b in report.rows()]
        _write_rows(Path(args.csv), "x,theta,ratio,bound", rows)
    return EXIT_OK if report.certified else EXIT_FAILURE


def _default_thresholds() -> list[float]:
    pos = np.logspace(-1, 3, 30)
    return [*(-pos[::-1]), 0.0, *pos]


def cmd_rate(args) -> int:
    started = time.time()
    (config,) = load_experiments(
        None, target=args.target, refresh=args.refresh, start=args.start, horizon=args.horizon,
        replicates=args.replicates, seed=args.seed, checkpoints=args.checkpoints, threads=args.threads,
    )
    thresholds = _floats(args.thresholds) if args.thresholds else _default_thresholds()
    fit_range = None
    if args.fit_lo is not None or args.fit_hi is not None:
        fit_range = (args.fit_lo or config.checkpoints[0], args.fit_hi or config.horizon)
    fit = rate_slope(config, thresholds, fit_range)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rate_csv = out_dir / "rate.csv"
    fit.to_csv(rate_csv)
    summary = {
        "slope": fit.slope,
        "ci_low": fit.ci[0],
        "ci_high": fit.ci[1],
        "points_used": fit.n_used,
        "noise_floor": fit.noise_floor,
        "conclusive": fit.conclusive,
    }
    if args.k is not None:
        target = config.target
        params = _drift_params(target, args)
        report = certify_drift(params, target, config.refresh)
        summary["certified"] = report.certified
        if report.certified:
            summary["B"] = fit_B(fit.D, fit.times, report.params, config.initial, target)
    summary_path = out_dir / "rate_summary.txt"
    summary_path.write_text("".join(f"{k} = {v}\n" for k, v in summary.items()))
    for key, value in summary.items():
        print(f"{key:12} {value}")
    if not fit.conclusive:
        print(fit.message)
    resolved = {key: getattr(args, key) for key in
                ("target", "refresh", "start", "horizon", "replicates", "checkpoints", "fit_lo", "fit_hi", "k")}
    _write_manifest(out_dir, "rate", resolved, config.seed, [rate_csv, summary_path], started)
    return EXIT_OK


def cmd_bounds(args) -> int:
    nu = args.nu
    etas = _floats(args.eta)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK

    m_rows = []
    for eta in etas:
        if args.k_grid:
            ks = _floats(args.k_grid)
        else:
            # approach the largest admissible k for this eta, (1+nu)/(1+eta) - 1
            k_top = min(nu, (1.0 + nu) / (1.0 + eta) - 1.0)
            ks = [k_top - (k_top - 0.1 * nu) * 10.0 ** -j for j in range(0, 7)]
        for k in ks:
            try:
                m_rows.append((float(k), float(eta), refresh_threshold_M(k, nu, eta), "ok"))
            except DomainError as exc:
                m_rows.append((float(k), float(eta), math.nan, f"error: {exc}".replace(",", ";")))
                status = EXIT_DOMAIN
    _write_rows(out_dir / "bounds_M.csv", "k,eta,M,status", m_rows)
    print("k, eta, M(k)")
    for k, eta, m, note in m_rows:
        print(f"  {k:.8g}  {eta:g}  {m:.6g}  {'' if note == 'ok' else note}")

    transforms = hairer_transforms(args.c, args.a)
    times = np.array(_floats(args.times)) if args.times else np.logspace(0, 6, 13)
    h_rows = [(float(t), float(transforms.H_inv(t)), float(transforms.f_of_H_inv(t))) for t in times]
    _write_rows(out_dir / "hairer.csv", "t,H_inv,f_of_H_inv", h_rows)

    c0, K = student_tail_constant(nu, args.eps)
    lb_times = np.logspace(math.log10(2.0 * K), math.log10(2.0 * K) + 4.0, 21)
    lb_rows = [
        (float(t), float(tv_lower_bound_student(t, nu, args.eps)), float(student_two_sided_tail(t, nu)))
        for t in lb_times
    ]
    _write_rows(out_dir / "lower_bound.csv", "t,lower_bound,exact_tail", lb_rows)
    print(f"Student nu={nu:g}: C0={c0:.6g}, K={K:.6g}; lower bound (2 C0/nu) t^-nu written")
    return status


# --------------------------------------------------------------------------
# argument parsing


def _add_process_flags(p, *, target_required=True):
    p.add_argument("--target", required=target_required, help="student:<dof> | cauchy | gaussian | custom:<path>")
    p.add_argument("--refresh", default=None if not target_required else "zero",
                   help="zero | const:<rate> | grad:<c>")
    p.add_argument("--start", default=None if not target_required else "0,+1", help="x,theta")
    p.add_argument("--horizon", type=float, default=None if not target_required else 1e4)
    p.add_argument("--seed", type=int, default=None if not target_required else 0)


def _add_drift_flags(p, *, k_required):
    p.add_argument("--k", type=float, required=k_required, help="polynomial order to certify")
    p.add_argument("--nu", type=float, help="tail level (default: tail index minus --slack)")
    p.add_argument("--slack", type=float, default=0.01)
    p.add_argument("--beta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--eta", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zigzag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one trajectory and write its skeleton CSV")
    _add_process_flags(p)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--out", default="skeleton.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mse", help="MSE of the tail-probability estimator across replicates")
    p.add_argument("--config", help="INI file with an [experiment] section")
    _add_process_flags(p, target_required=False)
    p.add_argument("--replicates", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--checkpoints")
    p.add_argument("--threads", type=int)
    p.add_argument("--out-dir", default="mse_out")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    p.set_defaults(func=cmd_mse)

    p = sub.add_parser("drift-check", help="grid certificate for the drift condition")
    p.add_argument("--target", required=True)
    p.add_argument("--refresh", default="zero")
    _add_drift_flags(p, k_required=True)
    p.add_argument("--grid-lo", type=float, default=1e-2)
    p.add_argument("--grid-hi", type=float, default=1e6)
    p.add_argument("--per-decade", type=int, default=512)
    p.add_argument("--csv", help="write x,theta,ratio,bound rows here")
    p.set_defaults(func=cmd_drift_check)

    p = sub.add_parser("rate", help="empirical decay of a TV lower bound across replicates")
    _add_process_flags(p)
    p.add_argument("--replicates", type=int, default=10000)
    p.add_argument("--checkpoints", default="200")
    p.add_argument("--thresholds", help="comma list of thresholds a")
    p.add_argument("--fit-lo", type=float)
    p.add_argument("--fit-hi", type=float)
    p.add_argument("--threads", type=int, default=default_threads())
    _add_drift_flags(p, k_required=False)
    p.add_argument("--out-dir", default="rate_out")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("bounds", help="tables of M(k), H^-1 and the Student TV lower bound")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--k-grid", help="comma list of k (default: approaches the admissible limit)")
    p.add_argument("--eta", default="0.1", help="comma list of eta")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--times", help="comma list of t for H^-1")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--out-dir", default="bounds_out")
    p.set_defaults(func=cmd_bounds)
    return parser


def _join_signed_values(argv: list[str]) -> list[str]:
    out = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg in _SIGNED_VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{arg}={argv[i + 1]}")
            i += 2
            continue
        out.append(arg)
        i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(_join_signed_values(argv))
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"zigzag {args.command}: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (UsageError, ValueError) as exc:
        print(f"zigzag {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, OSError, ArithmeticError) as exc:
        print(f"zigzag {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
