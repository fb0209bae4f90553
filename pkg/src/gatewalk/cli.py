"""Command-line harness: ``alpha``, ``simulate``, ``sweep``, ``pde`` and ``predict``.

Each subcommand writes CSV files into ``--out`` (data only, ready for plotting)
and prints a short summary. Files start with ``#`` comment lines holding the
config hash, seed, software versions and the numerical scheme; nothing in them
depends on the clock or on the worker count, so reruns are byte-identical.

Exit status: 0 on success, 2 on a configuration error, 1 on a runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from decimal import Decimal, localcontext
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numba
import numpy as np

from . import __version__, _rng
from .alpha import alpha_exact, alpha_table, monotonicity_scan
from .bridge import (
    ContinuumParams,
    EmptySelectionError,
    TrimRule,
    homogenized_K,
    k_trend,
    map_params,
    measure_K,
    predict_K_heuristic,
    predict_K_lattice_limit,
)
from .config import ConfigError, ExperimentConfig, load_config
from .pde_ref import cells_for, load_profile, solve_alternating
from .reference import TABLE_K, TABLE_TAU
from .schedule import GateSchedule
from .walkers import LatticeParams, StopRule, default_walkers, run

log = logging.getLogger("gatewalk")


# output helpers


def _g(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), ".17g")


def _d4(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.4f}"


def _header(cfg: ExperimentConfig, command: str, scheme: str) -> list[str]:
    return [
        f"# gatewalk {__version__} command={command}",
        f"# config_hash={cfg.digest()} seed={cfg.seed}",
        f"# python={platform.python_version()} numpy={np.__version__} numba={numba.__version__}",
        f"# scheme={scheme}",
    ]


def _write_csv(path: Path, header: Sequence[str], columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(r)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    log.info("wrote %s", path)


def _cont(cfg: ExperimentConfig) -> ContinuumParams:
    return ContinuumParams(D=cfg.D, L=cfg.L, mu=cfg.mu)


def _walker_scheme() -> str:
    return "occupancy counts; counter-based splitmix64 bits consumed site by site"


# alpha


def cmd_alpha(cfg: ExperimentConfig) -> int:
    table = alpha_table(cfg.r_max)
    scan = monotonicity_scan(max(cfg.r_max, 2))
    rows = []
    with localcontext() as ctx:
        ctx.prec = 15
        for r in range(1, cfg.r_max + 1):
            a = table.alpha[r]
            dec = Decimal(a.numerator) / Decimal(a.denominator)
            if r == 1:
                diff, sign = "", ""
            else:
                diff = _g(scan.diffs[r - 2])
                sign = "+" if scan.increasing[r - 2] else "-"
            rows.append((r, str(dec), _g(table.ratio[r]), diff, sign))
    out = Path(cfg.out) / "alpha.csv"
    header = _header(cfg, "alpha", "exact rationals; signs from exact comparison of squared ratios")
    header.append(f"# r0={scan.r0 if scan.found else 'not found'} r_max={cfg.r_max}")
    _write_csv(out, header, ("r", "alpha", "ratio", "ratio_diff", "sign"), rows)
    r0 = scan.r0 if scan.found else "not found"
    print(f"alpha({cfg.r_max})/sqrt({cfg.r_max}) = {table.ratio[cfg.r_max]:.6f}; increasing from r0 = {r0}")
    return 0


# simulate / sweep


def _point_params(cfg: ExperimentConfig, sigma_bar: int, n: int, seed: int):
    scales = map_params(_cont(cfg), n, sigma_bar)
    walkers = cfg.walkers or default_walkers(n)
    params = LatticeParams(
        n=n,
        sched=GateSchedule(sigma_bar, scales.tau_bar),
        walkers_init=walkers,
        seed=seed,
        init=cfg.init,
        on_violation="warn" if cfg.small_n == "warn" else "raise",
    )
    stop = StopRule(alive_fraction=cfg.stop_fraction, max_cycles=cfg.max_cycles)
    return scales, params, stop


def _summary(cfg: ExperimentConfig, sigma_bar: int, n: int, seed: int) -> dict:
    """Full pipeline for one grid point; returns the summary record and the cycle stats."""
    scales, params, stop = _point_params(cfg, sigma_bar, n, seed)
    stats = run(params, stop)
    meas = measure_K(stats, scales, TrimRule(min_alive_fraction=cfg.trim_fraction), params.walkers_init)
    cont = _cont(cfg)
    alpha_val = alpha_exact(sigma_bar)
    try:
        slope, slope_se = k_trend(stats, TrimRule(min_alive_fraction=cfg.trim_fraction))
    except EmptySelectionError:
        slope, slope_se = float("nan"), float("nan")
    return {
        "sigma_bar": sigma_bar,
        "n": n,
        "tau_bar": scales.tau_bar,
        "delta": scales.delta,
        "tau": scales.tau,
        "walkers": params.walkers_init,
        "seed": seed,
        "cycles_total": meas.cycles_total,
        "cycles_used": meas.cycles_used,
        "K_measured": meas.value,
        "K_stderr": meas.stderr,
        "K_heuristic": predict_K_heuristic(alpha_val, n, scales),
        "K_lattice_limit": predict_K_lattice_limit(sigma_bar, cont),
        "K_homogenized": homogenized_K(cont),
        "K_published": TABLE_K.get((sigma_bar, n)) if _standard(cfg) else None,
        "trend_slope": slope,
        "trend_slope_se": slope_se,
        "stats": stats,
        "ell_over_s": scales.ell_over_s,
    }


def _standard(cfg: ExperimentConfig) -> bool:
    return cfg.D == 1.0 and cfg.L == math.pi and cfg.mu == 1.0 / math.sqrt(2.0)


SUMMARY_COLUMNS = (
    "sigma_bar", "n", "tau_bar", "delta", "tau", "walkers", "seed", "cycles_total", "cycles_used",
    "K_measured", "K_stderr", "K_heuristic", "K_lattice_limit", "K_homogenized", "K_published",
    "trend_slope", "trend_slope_se", "K_display", "status",
)


def _summary_row(rec: dict) -> list[str]:
    row = []
    for c in SUMMARY_COLUMNS:
        if c == "K_display":
            row.append(_d4(rec.get("K_measured")))
        elif c == "status":
            row.append(rec.get("status", "ok"))
        else:
            v = rec.get(c)
            row.append(_g(v) if isinstance(v, float) else ("" if v is None else str(v)))
    return row


def _single(values: Sequence[int], name: str) -> int:
    if len(values) != 1:
        raise ConfigError(f"simulate takes exactly one {name}, got {len(values)}")
    return values[0]


def cmd_simulate(cfg: ExperimentConfig) -> int:
    sigma_bar = _single(cfg.sigma_bar, "sigma_bar")
    n = _single(cfg.n, "n")
    try:
        _point_params(cfg, sigma_bar, n, cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rec = _summary(cfg, sigma_bar, n, cfg.seed)
    header = _header(cfg, "simulate", _walker_scheme())
    ls = rec["ell_over_s"]
    cycle_rows = [
        (c.cycle + 1, c.F, c.U, c.U_open, c.alive, _g(c.k_float), _g(c.k_float * ls if c.U else float("nan")))
        for c in rec["stats"]
    ]
    stem = Path(cfg.out) / f"simulate_sb{sigma_bar}_n{n}"
    _write_csv(
        stem.with_name(stem.name + "_cycles.csv"),
        header,
        ("cycle", "F", "U", "U_open", "alive", "k", "K_cycle"),
        cycle_rows,
    )
    _write_csv(stem.with_name(stem.name + "_summary.csv"), header, SUMMARY_COLUMNS, [_summary_row(rec)])
    pub = rec["K_published"]
    print(
        f"sigma_bar={sigma_bar} n={n} tau={rec['tau']:.4f} K={rec['K_measured']:.4f} "
        f"+/- {rec['K_stderr']:.4f} heuristic={rec['K_heuristic']:.4f} "
        f"homogenized={rec['K_homogenized']:.4f}" + (f" published={pub:.4f}" if pub else "")
    )
    return 0


def _sweep_point(args: tuple[ExperimentConfig, int, int]) -> dict:
    cfg, sigma_bar, n = args
    seed = _rng.point_seed(cfg.seed, sigma_bar, n)
    try:
        rec = _summary(cfg, sigma_bar, n, seed)
        rec.pop("stats")
        return rec
    except Exception as exc:  # reported in the row, the sweep goes on
        return {"sigma_bar": sigma_bar, "n": n, "seed": seed, "status": f"failed: {type(exc).__name__}: {exc}"}


def sweep_points(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    """Grid points in output order.

    Pairs with n <= 2*sigma_bar are dropped with a warning, or kept with a
    warning when ``small_n = warn``.
    """
    pts = []
    for sb in sorted(set(cfg.sigma_bar)):
        for n in sorted(set(cfg.n)):
            if n <= 2 * sb:
                if cfg.small_n == "warn":
                    log.warning("sigma_bar=%d n=%d: n does not exceed 2*sigma_bar, running anyway", sb, n)
                else:
                    log.warning("skipping sigma_bar=%d n=%d: n must exceed 2*sigma_bar", sb, n)
                    continue
            pts.append((sb, n))
    return pts


def run_sweep(cfg: ExperimentConfig) -> list[dict]:
    pts = sweep_points(cfg)
    jobs = [(cfg, sb, n) for sb, n in pts]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            recs = list(pool.map(_sweep_point, jobs))
    else:
        recs = [_sweep_point(j) for j in jobs]
    for rec in recs:
        if rec.get("status", "ok") != "ok":
            log.error("sigma_bar=%s n=%s %s", rec["sigma_bar"], rec["n"], rec["status"])
    return sorted(recs, key=lambda r: (r["sigma_bar"], r["n"]))


def cmd_sweep(cfg: ExperimentConfig) -> int:
    recs = run_sweep(cfg)
    if not recs:
        raise ConfigError("no grid point satisfies n > 2*sigma_bar")
    _write_csv(
        Path(cfg.out) / "sweep.csv",
        _header(cfg, "sweep", _walker_scheme() + "; per-point seed from (seed, sigma_bar, n)"),
        SUMMARY_COLUMNS,
        [_summary_row(r) for r in recs],
    )
    failed = sum(1 for r in recs if r.get("status", "ok") != "ok")
    for r in recs:
        if r.get("status", "ok") == "ok":
            print(f"sigma_bar={r['sigma_bar']:>4} n={r['n']:>5} tau={r['tau']:.4f} K={r['K_measured']:.4f} +/- {r['K_stderr']:.4f}")
    if failed:
        print(f"{failed} of {len(recs)} points failed", file=sys.stderr)
        return 1
    return 0


# pde


def _sigma_rule(cfg: ExperimentConfig) -> Callable[[float], float]:
    if cfg.sigma_rule == "critical":
        return lambda tau: cfg.mu**2 * tau**2
    if cfg.sigma_rule == "cubic":
        return lambda tau: tau**3
    return lambda tau: 0.0


def cmd_pde(cfg: ExperimentConfig) -> int:
    cont = _cont(cfg)
    u0 = None
    if cfg.u0_file:
        try:
            u0 = load_profile(cfg.u0_file)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"u0_file: {exc}") from exc
    rule = _sigma_rule(cfg)
    target = homogenized_K(cont)
    rows, cycle_rows = [], []
    for tau in cfg.tau:
        sigma = rule(tau)
        if sigma > tau:
            raise ConfigError(f"sigma={sigma:.3g} exceeds tau={tau:.3g}")
        M = cfg.pde_cells or cells_for(sigma, cont)
        pde_run = solve_alternating(
            cont, sigma, tau, u0=u0, M=M, cycles=cfg.pde_cycles,
            steps_per_open=cfg.steps_per_open, scheme=cfg.scheme,
        )
        start = len(pde_run.records) // 2
        tail = pde_run.records[start:]
        flux = sum(r.flux_integral for r in tail)
        ratio = float(np.mean([r.ratio for r in tail])) if flux > 0 else 0.0
        rows.append(
            (
                _g(tau), _g(sigma), M, cfg.pde_cycles, _g(ratio), _g(flux),
                _g(pde_run.max_balance_residual), _g(target),
                _g((ratio - target) / target) if target > 0 else "", _d4(ratio),
            )
        )
        for r in pde_run.records:
            cycle_rows.append(
                (_g(tau), r.cycle + 1, _g(r.flux_integral), _g(r.density_integral), _g(r.ratio if r.density_integral > 0 else 0.0))
            )
    scheme = (
        f"{'backward' if cfg.scheme == 'implicit' else 'forward'} Euler, cell-centred finite volume, "
        f"second-order one-sided boundary flux, {cfg.steps_per_open} steps per open phase"
    )
    header = _header(cfg, "pde", scheme)
    header.append(f"# sigma_rule={cfg.sigma_rule} u0={'file ' + cfg.u0_file if cfg.u0_file else 'constant 1'}")
    _write_csv(
        Path(cfg.out) / "pde.csv",
        header,
        ("tau", "sigma", "M", "cycles", "ratio", "flux_integral", "max_balance_residual",
         "K_homogenized", "rel_gap", "ratio_display"),
        rows,
    )
    _write_csv(
        Path(cfg.out) / "pde_cycles.csv",
        header,
        ("tau", "cycle", "flux_integral", "density_integral", "ratio"),
        cycle_rows,
    )
    for row in rows:
        print(f"tau={float(row[0]):.5g} ratio={row[-1]} target={target:.4f}")
    return 0


# predict


def cmd_predict(cfg: ExperimentConfig) -> int:
    cont = _cont(cfg)
    std = _standard(cfg)
    rows = []
    for sb in sorted(set(cfg.sigma_bar)):
        a = alpha_exact(sb)
        for n in sorted(set(cfg.n)):
            try:
                sc = map_params(cont, n, sb)
            except ValueError as exc:
                raise ConfigError(f"sigma_bar={sb} n={n}: {exc}") from exc
            pub_tau = TABLE_TAU.get((sb, n)) if std else None
            rows.append(
                (
                    sb, n, sc.tau_bar, _g(sc.delta), _g(sc.tau), _d4(sc.tau), _g(pub_tau),
                    _g((sc.tau - pub_tau) / pub_tau) if pub_tau else "",
                    _g(predict_K_heuristic(a, n, sc)), _g(predict_K_lattice_limit(sb, cont)),
                    _g(homogenized_K(cont)), _g(TABLE_K.get((sb, n)) if std else None),
                )
            )
    _write_csv(
        Path(cfg.out) / "predict.csv",
        _header(cfg, "predict", "closed-form mapping and predictors"),
        ("sigma_bar", "n", "tau_bar", "delta", "tau", "tau_display", "tau_published", "tau_rel_diff",
         "K_heuristic", "K_lattice_limit", "K_homogenized", "K_published"),
        rows,
    )
    for r in rows:
        print(f"sigma_bar={r[0]:>4} n={r[1]:>5} tau={r[5]}" + (f" (published {float(r[6]):.4f})" if r[6] else ""))
    return 0


COMMANDS = {
    "alpha": cmd_alpha,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "pde": cmd_pde,
    "predict": cmd_predict,
}

# flag -> config key
_OVERRIDES = {
    "seed": "seed",
    "sigma_bar": "sigma_bar",
    "n": "n",
    "walkers": "walkers",
    "trim_fraction": "trim_fraction",
    "stop_fraction": "stop_fraction",
    "max_cycles": "max_cycles",
    "out": "out",
    "workers": "workers",
    "r_max": "r_max",
    "tau": "tau",
    "sigma_rule": "sigma_rule",
    "cells": "pde_cells",
    "cycles": "pde_cycles",
    "scheme": "scheme",
    "u0": "u0_file",
    "init": "init",
    "small_n": "small_n",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value file")
    common.add_argument("--seed", metavar="U64")
    common.add_argument("--sigma-bar", dest="sigma_bar", metavar="LIST", help="comma-separated open lengths")
    common.add_argument("--n", metavar="LIST", help="comma-separated site counts")
    common.add_argument("--walkers", metavar="N")
    common.add_argument("--trim-fraction", dest="trim_fraction", metavar="F")
    common.add_argument("--stop-fraction", dest="stop_fraction", metavar="F")
    common.add_argument("--max-cycles", dest="max_cycles", metavar="N")
    common.add_argument("--init", choices=("iid", "equal"))
    common.add_argument(
        "--small-n", dest="small_n", choices=("skip", "warn"), help="pairs with n <= 2*sigma_bar: skip or run"
    )
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--workers", metavar="N")
    common.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="gatewalk", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"gatewalk {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("alpha", parents=[common], help="exact alpha(r) table and monotonicity scan")
    a.add_argument("--r-max", dest="r_max", metavar="R")
    sub.add_parser("simulate", parents=[common], help="one (sigma_bar, n) point with per-cycle output")
    sub.add_parser("sweep", parents=[common], help="the (sigma_bar x n) grid")
    d = sub.add_parser("pde", parents=[common], help="alternating-gate PDE convergence in tau")
    d.add_argument("--tau", metavar="LIST", help="strictly decreasing cycle lengths")
    d.add_argument("--sigma-rule", dest="sigma_rule", choices=("critical", "cubic", "zero"))
    d.add_argument("--cells", metavar="M")
    d.add_argument("--cycles", metavar="N")
    d.add_argument("--scheme", choices=("implicit", "explicit"))
    d.add_argument("--u0", metavar="PATH", help="two-column (x, u0) initial profile")
    sub.add_parser("predict", parents=[common], help="tau mapping and K predictions against published values")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        over = {key: getattr(args, flag, None) for flag, key in _OVERRIDES.items()}
        cfg = cfg.with_overrides(over)
        if args.print_config:
            sys.stdout.write(cfg.to_text())
            return 0
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"gatewalk: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"gatewalk: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
