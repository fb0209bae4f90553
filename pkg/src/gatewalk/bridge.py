"""Lattice/continuum parameter mapping and the flux-to-density constant K.

For a lattice of ``n`` sites on ``[0, L]`` the spacing is ``ell = L/(n+1)`` and
the time unit ``s = ell**2 / (2D)``. Given the open length ``sigma_bar`` the
cycle length is chosen so that ``sigma_bar*s`` matches ``(mu*tau_bar*s)**2`` as
closely as integers allow. K is the outgoing flux per unit time divided by the
gate-adjacent density per unit length; it is measured from per-cycle counts and
compared with two analytic predictions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .alpha import alpha_exact
from .walkers import CycleStats


@dataclass(frozen=True)
class ContinuumParams:
    """Diffusion coefficient, interval length and critical scaling ``mu = lim sqrt(sigma)/tau``.

    ``mu = 0`` is accepted (closed-door limit); the lattice mapping needs ``mu > 0``.
    """

    D: float = 1.0
    L: float = math.pi
    mu: float = 1.0 / math.sqrt(2.0)
    horizon_cycles: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.D > 0 or not self.L > 0:
            raise ValueError("D and L must be positive")
        if not self.mu >= 0:
            raise ValueError("mu must be nonnegative")

    def horizon(self, tau: float) -> Optional[float]:
        """``T = (m+1)*tau`` when a cycle count ``m`` is set."""
        if self.horizon_cycles is None:
            return None
        return (self.horizon_cycles + 1) * tau


STANDARD_CONSTANTS = ContinuumParams(D=1.0, L=math.pi, mu=1.0 / math.sqrt(2.0))


@dataclass(frozen=True)
class MappedScales:
    n: int
    sigma_bar: int
    ell: float
    s: float
    tau_bar: int
    delta: float
    tau: float

    @property
    def ell_over_s(self) -> float:
        return self.ell / self.s

    @property
    def sigma(self) -> float:
        """Open length in continuum time, ``sigma_bar * s``."""
        return self.sigma_bar * self.s


def map_params(cont: ContinuumParams, n: int, sigma_bar: int) -> MappedScales:
    """Lattice spacing, time unit and cycle length matching ``cont`` at (n, sigma_bar).

    Raises ValueError when the cycle would be shorter than the open window.
    """
    if n < 1 or sigma_bar < 1:
        raise ValueError("n and sigma_bar must be positive")
    if not cont.mu > 0:
        raise ValueError("the lattice mapping needs mu > 0")
    ell = cont.L / (n + 1)
    s = ell * ell / (2.0 * cont.D)
    exact = math.sqrt(sigma_bar / s) / cont.mu
    tau_bar = math.floor(exact)
    if tau_bar < 1:
        raise ValueError(f"cycle length {exact:.3g} < 1 step")
    if tau_bar < sigma_bar:
        raise ValueError(
            f"tau_bar={tau_bar} < sigma_bar={sigma_bar}: cycle shorter than the open window"
        )
    return MappedScales(
        n=n, sigma_bar=sigma_bar, ell=ell, s=s, tau_bar=tau_bar, delta=exact - tau_bar, tau=s * tau_bar
    )


def predict_K_heuristic(alpha_val: Fraction, n: int, scales: MappedScales) -> float:
    """``[1/alpha - 1/n]**-1 / tau_bar * ell/s``, assuming a uniform profile in each cycle."""
    alpha_val = Fraction(alpha_val)
    n = int(n)  # numpy integers overflow against big rationals
    if alpha_val >= n:
        raise ValueError(f"alpha={float(alpha_val):.4g} must be below n={n}")
    bracket_inv = alpha_val * n / (n - alpha_val)
    return float(bracket_inv) / scales.tau_bar * scales.ell_over_s


def predict_K_lattice_limit(sigma_bar: int, cont: ContinuumParams) -> float:
    """n -> infinity limit of the heuristic: alpha(sigma_bar)/sqrt(sigma_bar) * sqrt(2D) * mu."""
    return float(alpha_exact(sigma_bar)) / math.sqrt(sigma_bar) * math.sqrt(2.0 * cont.D) * cont.mu


def homogenized_K(cont: ContinuumParams) -> float:
    """Robin coefficient of the homogenized problem times D: ``2*mu*sqrt(D/pi)``."""
    return 2.0 * cont.mu * math.sqrt(cont.D / math.pi)


@dataclass(frozen=True)
class TrimRule:
    """Which cycles enter the average of k_i.

    Drops cycles ending with fewer than ``min_alive_fraction * N`` walkers,
    cycles with ``U == 0`` (when ``drop_zero_U``), and the first ``burn_in``.
    """

    min_alive_fraction: float = 0.05
    drop_zero_U: bool = True
    burn_in: int = 0

    def select(self, stats: Sequence[CycleStats], walkers: Optional[int] = None) -> list[CycleStats]:
        if not stats:
            return []
        if walkers is None:
            first = stats[0]
            walkers = first.alive + first.F
        keep = []
        for c in stats:
            if c.cycle < self.burn_in:
                continue
            if c.alive < self.min_alive_fraction * walkers:
                continue
            if c.U == 0:
                if self.drop_zero_U:
                    continue
                raise ValueError(f"cycle {c.cycle} has U = 0")
            keep.append(c)
        return keep


class EmptySelectionError(ValueError):
    pass


@dataclass(frozen=True)
class KMeasurement:
    value: float
    stderr: float
    cycles_used: int
    cycles_total: int
    stderr_kind: str = "plain standard error, no autocorrelation correction"


def _k_values(stats: Sequence[CycleStats]) -> np.ndarray:
    return np.array([c.F / c.U for c in stats], dtype=float)


def measure_K(
    stats: Sequence[CycleStats],
    scales: MappedScales,
    trim: TrimRule = TrimRule(),
    walkers: Optional[int] = None,
) -> KMeasurement:
    """``ell/s`` times the unweighted mean of k_i = F_i/U_i over retained cycles.

    ``walkers`` defaults to the count implied by the first cycle (alive + exits).
    """
    kept = trim.select(stats, walkers)
    if not kept:
        raise EmptySelectionError("no cycle survives the trim rule")
    k = _k_values(kept)
    se = float(k.std(ddof=1) / math.sqrt(k.size)) if k.size > 1 and np.ptp(k) > 0 else 0.0
    return KMeasurement(
        value=float(k.mean()) * scales.ell_over_s,
        stderr=se * scales.ell_over_s,
        cycles_used=int(k.size),
        cycles_total=len(stats),
    )


def block_bootstrap_stderr(
    stats: Sequence[CycleStats],
    scales: MappedScales,
    trim: TrimRule = TrimRule(),
    block: int = 10,
    n_boot: int = 1000,
    seed: int = 0,
) -> float:
    """Moving-block bootstrap standard error of the measured K (diagnostic)."""
    k = _k_values(trim.select(stats))
    if k.size == 0:
        raise EmptySelectionError("no cycle survives the trim rule")
    block = max(1, min(block, k.size))
    starts_max = k.size - block + 1
    n_blocks = math.ceil(k.size / block)
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, starts_max, size=(n_boot, n_blocks))
    idx = (starts[:, :, None] + np.arange(block)).reshape(n_boot, -1)[:, : k.size]
    means = k[idx].mean(axis=1)
    return float(means.std(ddof=1)) * scales.ell_over_s


def k_trend(stats: Sequence[CycleStats], trim: TrimRule = TrimRule()) -> tuple[float, float]:
    """Least-squares slope of k_i against the cycle index, with its standard error."""
    kept = trim.select(stats)
    if len(kept) < 3:
        raise EmptySelectionError("need at least three retained cycles for a trend")
    i = np.array([c.cycle for c in kept], dtype=float)
    k = _k_values(kept)
    X = np.column_stack([np.ones_like(i), i])
    coef, res, *_ = np.linalg.lstsq(X, k, rcond=None)
    resid = k - X @ coef
    sigma2 = resid @ resid / (k.size - 2)
    cov = sigma2 * np.linalg.inv(X.T @ X)
    return float(coef[1]), float(math.sqrt(cov[1, 1]))
