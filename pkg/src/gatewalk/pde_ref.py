"""Finite-volume reference solver for diffusion on [0, L] with a switching right boundary.

The interval is split into ``M`` cells of width ``h = L/M`` with values at the
cell centres. The left end is always no-flux. At the right end the solver
supports

* an alternating gate: ``u(L) = 0`` on ``[k*tau, k*tau + sigma)``, no flux otherwise;
* the homogenized Robin condition ``-u_x(L) = beta*u(L)``, ``beta = 2*mu/sqrt(D*pi)``.

The boundary value enters through a ghost value fixed by a quadratic through
the boundary and the two last cell centres, which makes the outgoing flux a
second-order one-sided difference. The same flux is used in the update, so the
cell-sum mass changes by exactly the integrated flux.

Time stepping is backward Euler by default. Open phases use ``steps_per_open``
equal steps. Closed phases start at the same step and grow geometrically, since
the boundary layer left by an opening relaxes on the scale of ``sigma``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .bridge import ContinuumParams, homogenized_K

Profile = Union[None, float, Callable[[np.ndarray], np.ndarray], tuple]

SCHEMES = ("implicit", "explicit")


class StabilityError(ValueError):
    """Explicit step too large for the discrete maximum principle."""


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class PdeState:
    """Cell values on ``[0, L]``; ``x`` are the cell centres."""

    u: np.ndarray
    h: float
    t_now: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.u.size) + 0.5) * self.h

    @property
    def mass(self) -> float:
        return float(self.h * self.u.sum())


@dataclass(frozen=True)
class PdeRecord:
    """Time integrals over one cycle (or output interval).

    ``density_integral`` uses the last cell, ``boundary_density_integral`` the
    reconstructed value at x = L (zero while the gate is open).
    """

    cycle: int
    t_start: float
    t_end: float
    flux_integral: float
    density_integral: float
    boundary_density_integral: float
    mass_start: float
    mass_end: float

    @property
    def ratio(self) -> float:
        """Flux over last-cell density, the analogue of the lattice k_i * ell/s."""
        return self.flux_integral / self.density_integral if self.density_integral > 0 else float("nan")

    @property
    def boundary_ratio(self) -> float:
        if self.boundary_density_integral > 0:
            return self.flux_integral / self.boundary_density_integral
        return float("nan")

    @property
    def balance_residual(self) -> float:
        """|mass lost - integrated flux| relative to the starting mass."""
        if self.mass_start == 0:
            return abs(self.mass_end + self.flux_integral)
        return abs(self.mass_start - self.mass_end - self.flux_integral) / self.mass_start


@dataclass
class PdeRun:
    records: list[PdeRecord]
    state: PdeState
    metadata: dict = field(default_factory=dict)

    def mean_ratio(self, skip_fraction: float = 0.5, boundary: bool = False) -> float:
        """Average per-cycle ratio over the cycles after the first ``skip_fraction``."""
        start = int(len(self.records) * skip_fraction)
        recs = self.records[start:] or self.records[-1:]
        vals = [r.boundary_ratio if boundary else r.ratio for r in recs]
        return float(np.mean(vals))

    @property
    def max_balance_residual(self) -> float:
        return max((r.balance_residual for r in self.records), default=0.0)


def load_profile(path: Union[str, Path]) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column (x, u0) text profile; ``#`` starts a comment."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, got {data.shape[1]}")
    order = np.argsort(data[:, 0])
    return data[order, 0], data[order, 1]


def initial_state(cont: ContinuumParams, M: int, u0: Profile = None) -> PdeState:
    """Cell averages (midpoint values) of ``u0``; constant 1 when ``u0`` is None."""
    if M < 2:
        raise ValueError("need at least two cells")
    h = cont.L / M
    x = (np.arange(M) + 0.5) * h
    if u0 is None:
        u = np.ones(M)
    elif callable(u0):
        u = np.asarray(u0(x), dtype=float) * np.ones(M)
    elif isinstance(u0, tuple):
        xs, us = u0
        u = np.interp(x, np.asarray(xs, float), np.asarray(us, float))
    else:
        u = np.full(M, float(u0))
    if not np.all(np.isfinite(u)):
        raise NonFiniteError("initial profile has non-finite values")
    return PdeState(u=u, h=h)


def _closed_steps(length: float, dt0: float, growth: float, dt_cap: float) -> np.ndarray:
    if length <= 0:
        return np.empty(0)
    steps = []
    t = 0.0
    d = dt0
    while length - t > 1e-14 * length:
        d = min(d, dt_cap)
        left = length - t
        if left < 1.5 * d:
            d = left
        steps.append(d)
        t += d
        d *= growth
    return np.array(steps)


def _check_finite(u: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(u)):
        raise NonFiniteError(f"non-finite values at t={t:.6g}")


def _check_explicit(dts: np.ndarray, cont: ContinuumParams, h: float, beta: float) -> None:
    # positivity of every row of I + dt*A; the gate row has the largest diagonal
    if dts.size == 0:
        return
    worst = max(4.0, 2.0, 1.0 + 9.0 * h * beta / (8.0 + 3.0 * h * beta))
    dt_max = h * h / (cont.D * worst)
    if dts.max() > dt_max * (1 + 1e-12):
        raise StabilityError(f"explicit step {dts.max():.3g} exceeds {dt_max:.3g}")


def solve_alternating(
    cont: ContinuumParams,
    sigma: float,
    tau: float,
    u0: Profile = None,
    M: int = 2000,
    cycles: int = 10,
    *,
    steps_per_open: int = 40,
    closed_growth: float = 1.15,
    closed_cap_fraction: float = 0.02,
    scheme: str = "implicit",
) -> PdeRun:
    """Diffusion with the gate absorbing on ``[k*tau, k*tau+sigma)`` and reflecting otherwise.

    Parameters
    ----------
    sigma, tau : float
        Open length and cycle length, ``0 <= sigma <= tau``.
    M : int
        Number of cells.
    cycles : int
        Number of cycles to integrate.
    steps_per_open : int
        Equal steps per open phase (at least 10).
    closed_growth, closed_cap_fraction : float
        Closed-phase steps start at the open step and grow by ``closed_growth``
        up to ``closed_cap_fraction * tau``.
    scheme : {"implicit", "explicit"}
        Backward Euler, or forward Euler with uniform steps checked against
        the positivity bound.

    Returns
    -------
    PdeRun
        One :class:`PdeRecord` per cycle plus the final state.
    """
    if not 0 <= sigma <= tau or tau <= 0:
        raise ValueError("need 0 <= sigma <= tau and tau > 0")
    if steps_per_open < 10:
        raise ValueError("steps_per_open must be >= 10")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    state = initial_state(cont, M, u0)
    h = state.h
    implicit = scheme == "implicit"
    closed_len = tau - sigma
    if sigma > 0:
        dt_open = sigma / steps_per_open
    else:
        dt_open = tau / (10 * steps_per_open)
    if implicit:
        open_dts = np.full(steps_per_open, dt_open) if sigma > 0 else np.empty(0)
        closed_dts = _closed_steps(closed_len, dt_open, closed_growth, max(dt_open, closed_cap_fraction * tau))
    else:
        dt = min(dt_open, h * h / (4.0 * cont.D))
        n_open = math.ceil(sigma / dt) if sigma > 0 else 0
        n_closed = math.ceil(closed_len / dt) if closed_len > 0 else 0
        open_dts = np.full(n_open, sigma / n_open) if n_open else np.empty(0)
        closed_dts = np.full(n_closed, closed_len / n_closed) if n_closed else np.empty(0)
        _check_explicit(np.concatenate([open_dts, closed_dts]), cont, h, 0.0)
    cp = np.empty(M)
    dp = np.empty(M)
    records = []
    t = 0.0
    for c in range(cycles):
        m0 = state.mass
        fo, do, bo = _kernels.run_phase(state.u, open_dts, cont.D, h, _kernels.OPEN, 0.0, implicit, cp, dp)
        fc, dc, bc = _kernels.run_phase(state.u, closed_dts, cont.D, h, _kernels.CLOSED, 0.0, implicit, cp, dp)
        t_end = (c + 1) * tau
        _check_finite(state.u, t_end)
        records.append(
            PdeRecord(
                cycle=c,
                t_start=t,
                t_end=t_end,
                flux_integral=fo + fc,
                density_integral=do + dc,
                boundary_density_integral=bo + bc,
                mass_start=m0,
                mass_end=state.mass,
            )
        )
        t = t_end
    state.t_now = t
    meta = {
        "solver": "alternating",
        "scheme": f"finite-volume cell-centred, {'backward' if implicit else 'forward'} Euler",
        "flux": "second-order one-sided (quadratic ghost closure)",
        "M": M,
        "h": h,
        "sigma": sigma,
        "tau": tau,
        "dt_open": float(open_dts[0]) if open_dts.size else None,
        "steps_open": int(open_dts.size),
        "steps_closed": int(closed_dts.size),
    }
    return PdeRun(records=records, state=state, metadata=meta)


def solve_robin(
    cont: ContinuumParams,
    u0: Profile = None,
    M: int = 2000,
    T: float = 1.0,
    *,
    intervals: int = 10,
    dt: Optional[float] = None,
    scheme: str = "implicit",
) -> PdeRun:
    """Diffusion with ``-u_x(L) = beta*u(L)``, ``beta = 2*mu/sqrt(D*pi)``.

    Output is split into ``intervals`` equal windows of ``[0, T]``. The
    boundary ratio of every window equals ``2*mu*sqrt(D/pi)`` up to rounding,
    since the flux is ``D*beta`` times the reconstructed boundary value.
    """
    if T <= 0 or intervals < 1:
        raise ValueError("need T > 0 and intervals >= 1")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    state = initial_state(cont, M, u0)
    h = state.h
    beta = 2.0 * cont.mu / math.sqrt(cont.D * math.pi)
    implicit = scheme == "implicit"
    window = T / intervals
    if dt is None:
        dt = min(window / 50.0, 0.25 * h) if implicit else h * h / (4.0 * cont.D)
    n_steps = max(1, math.ceil(window / dt))
    dts = np.full(n_steps, window / n_steps)
    if not implicit:
        _check_explicit(dts, cont, h, beta)
    mode = _kernels.ROBIN if beta > 0 else _kernels.CLOSED
    cp = np.empty(M)
    dp = np.empty(M)
    records = []
    for c in range(intervals):
        m0 = state.mass
        f, d, b = _kernels.run_phase(state.u, dts, cont.D, h, mode, beta, implicit, cp, dp)
        _check_finite(state.u, (c + 1) * window)
        records.append(
            PdeRecord(
                cycle=c,
                t_start=c * window,
                t_end=(c + 1) * window,
                flux_integral=f,
                density_integral=d,
                boundary_density_integral=b,
                mass_start=m0,
                mass_end=state.mass,
            )
        )
    state.t_now = T
    meta = {
        "solver": "robin",
        "scheme": f"finite-volume cell-centred, {'backward' if implicit else 'forward'} Euler",
        "flux": "Robin, quadratic ghost closure",
        "M": M,
        "h": h,
        "beta": beta,
        "dt": float(dts[0]),
    }
    return PdeRun(records=records, state=state, metadata=meta)


def robin_decay_rate(cont: ContinuumParams, tol: float = 1e-14) -> float:
    """Slowest decay rate ``D*k**2`` of the no-flux/Robin problem.

    ``k`` is the smallest positive root of ``k*tan(k*L) = beta``, located by
    bisection on ``(0, pi/(2L))`` where the left side increases from 0 to infinity.
    """
    beta = 2.0 * cont.mu / math.sqrt(cont.D * math.pi)
    if beta == 0:
        return 0.0
    lo, hi = 0.0, math.pi / (2.0 * cont.L)
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid * math.tan(mid * cont.L) < beta:
            lo = mid
        else:
            hi = mid
    k = 0.5 * (lo + hi)
    return cont.D * k * k


def critical_sigma(cont: ContinuumParams) -> Callable[[float], float]:
    """``sigma = mu**2 * tau**2``, the scaling that yields the Robin limit."""
    return lambda tau: cont.mu**2 * tau**2


def cells_for(sigma: float, cont: ContinuumParams, per_layer: float = 8.0, lo: int = 400, hi: int = 40000) -> int:
    """Cell count resolving the open-phase boundary layer ``sqrt(D*sigma)`` with ``per_layer`` cells."""
    if sigma <= 0:
        return lo
    M = math.ceil(per_layer * cont.L / math.sqrt(cont.D * sigma))
    return int(min(max(M, lo), hi))


@dataclass(frozen=True)
class ConvergencePoint:
    tau: float
    sigma: float
    ratio: float
    M: int
    cycles: int
    flux_integral: float
    max_balance_residual: float


def tau_convergence_study(
    cont: ContinuumParams,
    tau_list: Sequence[float],
    sigma_rule: Optional[Callable[[float], float]] = None,
    *,
    M: Optional[int] = None,
    cycles: int = 40,
    skip_fraction: float = 0.5,
    **solver_kw,
) -> list[ConvergencePoint]:
    """Time-averaged alternating-gate ratio for each tau of a decreasing list.

    ``sigma_rule`` defaults to the critical scaling. With ``M=None`` the grid
    is sized from the boundary layer of each point.
    """
    taus = list(tau_list)
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_list must be strictly decreasing")
    rule = sigma_rule or critical_sigma(cont)
    out = []
    for tau in taus:
        sigma = rule(tau)
        m = M or cells_for(sigma, cont)
        run = solve_alternating(cont, sigma, tau, M=m, cycles=cycles, **solver_kw)
        start = int(len(run.records) * skip_fraction)
        flux = sum(r.flux_integral for r in run.records[start:])
        ratio = run.mean_ratio(skip_fraction) if flux > 0 else 0.0
        out.append(
            ConvergencePoint(
                tau=tau,
                sigma=sigma,
                ratio=ratio,
                M=m,
                cycles=cycles,
                flux_integral=flux,
                max_balance_residual=run.max_balance_residual,
            )
        )
    return out


def homogenized_target(cont: ContinuumParams) -> float:
    return homogenized_K(cont)
