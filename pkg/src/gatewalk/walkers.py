"""Monte Carlo engine for independent walkers leaking through a time-periodic gate.

Sites are numbered 1..n in the public API (0..n-1 in arrays). Site 1 is
reflecting: a walker there stays with probability 1/2 or moves right. At site n
a walker moves left with probability 1/2; otherwise it exits through the gate
when the gate is open, or stays when it is closed. Exited walkers never return.

Two engines share this rule set:

* the occupancy engine (:func:`run`, :func:`step`) stores one integer count per
  site and is the one used for measurements;
* the per-walker engine (:func:`init_walkers`, :func:`step_walkers`) keeps
  explicit positions and draws one bit per walker per step.

Both consume counter-addressed random bits (see :mod:`gatewalk._rng`), so a run
is a pure function of its parameters and seed.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np

from . import _kernels, _rng
from .schedule import GateSchedule, gate_is_open

log = logging.getLogger(__name__)

MIN_DEFAULT_WALKERS = 100_000


class ConservationError(RuntimeError):
    """Raised when alive + absorbed differs from the initial walker count."""


def default_walkers(n: int) -> int:
    return max(MIN_DEFAULT_WALKERS, 50 * n)


@dataclass(frozen=True)
class LatticeParams:
    """Discrete model: ``n`` sites, gate schedule, ``walkers_init`` walkers and a seed.

    ``n > 2*sigma_bar`` is required unless ``on_violation`` is ``"warn"``.
    ``init`` selects i.i.d. uniform placement (``"iid"``) or equal occupancy
    (``"equal"``).
    """

    n: int
    sched: GateSchedule
    walkers_init: int
    seed: int = 0
    on_violation: str = "raise"
    init: str = "iid"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.walkers_init < 1:
            raise ValueError("walkers_init must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.init not in ("iid", "equal"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.on_violation not in ("raise", "warn"):
            raise ValueError(f"on_violation must be 'raise' or 'warn', not {self.on_violation!r}")
        if self.n <= 2 * self.sched.sigma_bar:
            msg = f"n={self.n} must exceed 2*sigma_bar={2 * self.sched.sigma_bar}"
            if self.on_violation == "raise":
                raise ValueError(msg)
            warnings.warn(msg, stacklevel=3)

    @property
    def tau_over_sigma(self) -> float:
        """Cycle length over open length; expected to be large but never enforced."""
        if self.sched.sigma_bar == 0:
            return float("inf")
        return self.sched.tau_bar / self.sched.sigma_bar


@dataclass(frozen=True)
class StopRule:
    """Stop when fewer than ``alive_fraction * N`` walkers remain or after ``max_cycles``."""

    alive_fraction: float = 0.01
    max_cycles: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.alive_fraction <= 1.0:
            raise ValueError("alive_fraction must lie in [0, 1]")
        if self.max_cycles is not None and self.max_cycles < 0:
            raise ValueError("max_cycles must be nonnegative")


@dataclass(frozen=True)
class CycleStats:
    """Counts for one completed cycle (``cycle`` is 0-based).

    ``U`` sums the occupancy of site n at the start of every step of the cycle;
    ``U_open`` restricts that sum to open steps. ``alive`` is taken at the end.
    """

    cycle: int
    F: int
    U: int
    U_open: int
    alive: int

    @property
    def k(self) -> Optional[Fraction]:
        return Fraction(self.F, self.U) if self.U else None

    @property
    def k_float(self) -> float:
        return self.F / self.U if self.U else float("nan")


@dataclass
class WalkerEnsemble:
    """Per-site occupancy of the alive walkers plus bookkeeping.

    ``counts[x]`` holds the number of walkers at site ``x + 1``. ``F`` and ``U``
    accumulate the current (unfinished) cycle.
    """

    counts: np.ndarray
    absorbed_total: int
    t: int
    walkers_init: int
    key: np.uint64
    F: int = 0
    U: int = 0
    U_open: int = 0
    _scratch: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self._scratch is None:
            self._scratch = np.empty_like(self.counts)

    @property
    def alive(self) -> int:
        return int(self.counts.sum())

    @property
    def positions(self) -> np.ndarray:
        """Sorted 1-based sites of the alive walkers (the multiset view)."""
        return np.repeat(np.arange(1, self.counts.size + 1), self.counts)

    def check_conservation(self) -> None:
        alive = self.alive
        if alive + self.absorbed_total != self.walkers_init:
            raise ConservationError(
                f"t={self.t}: alive {alive} + absorbed {self.absorbed_total} "
                f"!= N {self.walkers_init}"
            )
        if self.counts.min(initial=0) < 0:
            raise ConservationError(f"t={self.t}: negative occupancy")

    def copy(self) -> "WalkerEnsemble":
        return replace(self, counts=self.counts.copy(), _scratch=None)


def _initial_sites(params: LatticeParams) -> np.ndarray:
    """0-based site of every walker at t = 0."""
    n, N = params.n, params.walkers_init
    if params.init == "equal":
        # floor/ceil split, the extra walkers on the lowest sites
        return np.repeat(np.arange(n), [N // n + (1 if x < N % n else 0) for x in range(n)])
    key = _rng.derive_key(params.seed, _rng.STREAM_INIT)
    return _rng.uniform_sites(key, N, n)


def init_ensemble(params: LatticeParams) -> WalkerEnsemble:
    """Place the N walkers on sites 1..n (i.i.d. uniform by default)."""
    sites = _initial_sites(params)
    counts = np.bincount(sites, minlength=params.n).astype(np.int64)
    ens = WalkerEnsemble(
        counts=counts,
        absorbed_total=0,
        t=0,
        walkers_init=params.walkers_init,
        key=_rng.derive_key(params.seed, _rng.STREAM_COUNTS),
    )
    ens.check_conservation()
    return ens


def _advance(ens: WalkerEnsemble, params: LatticeParams, steps: int) -> tuple[int, int, int]:
    sched = params.sched
    F, U, U_open = _kernels.advance_counts(
        ens.counts, ens._scratch, ens.key, ens.t, steps, sched.sigma_bar, sched.tau_bar
    )
    ens.t += steps
    ens.absorbed_total += int(F)
    return int(F), int(U), int(U_open)


def step(ens: WalkerEnsemble, params: LatticeParams) -> WalkerEnsemble:
    """Move every alive walker once; returns a new ensemble.

    Crossing into a new cycle resets the per-cycle accumulators first.
    """
    out = ens.copy()
    if out.t % params.sched.tau_bar == 0:
        out.F = out.U = out.U_open = 0
    F, U, U_open = _advance(out, params, 1)
    out.F += F
    out.U += U
    out.U_open += U_open
    out.check_conservation()
    return out


def iter_cycles(params: LatticeParams, stop: StopRule = StopRule()) -> Iterator[CycleStats]:
    """Yield one :class:`CycleStats` per completed cycle until ``stop`` fires."""
    ens = init_ensemble(params)
    N = params.walkers_init
    threshold = stop.alive_fraction * N
    tau_bar = params.sched.tau_bar
    cycle = 0
    alive = N
    while True:
        if stop.max_cycles is not None and cycle >= stop.max_cycles:
            return
        if alive == 0 or alive < threshold:
            return
        F, U, U_open = _advance(ens, params, tau_bar)
        alive -= F
        ens.check_conservation()
        if ens.alive != alive:
            raise ConservationError(f"cycle {cycle}: occupancy does not match exit count")
        yield CycleStats(cycle=cycle, F=F, U=U, U_open=U_open, alive=alive)
        cycle += 1


def run(params: LatticeParams, stop: StopRule = StopRule()) -> list[CycleStats]:
    """Advance whole cycles until ``stop`` fires; deterministic given ``params.seed``."""
    stats = list(iter_cycles(params, stop))
    log.debug("n=%d sigma_bar=%d: %d cycles", params.n, params.sched.sigma_bar, len(stats))
    return stats


@dataclass(frozen=True)
class ExpectedCycle:
    """Exact per-walker expectations for one cycle: E[F_i]/N, E[U_i]/N, survival."""

    cycle: int
    F: float
    U: float
    alive: float

    @property
    def k(self) -> float:
        return self.F / self.U if self.U > 0 else float("nan")


def expected_run(
    n: int, sched: GateSchedule, stop: StopRule = StopRule(), init: str = "iid"
) -> list[ExpectedCycle]:
    """Evolve the one-walker law exactly (the infinite-N limit of :func:`run`).

    With i.i.d. uniform placement the initial law is uniform on 1..n; the stop
    rule is applied to the expected survival fraction.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    p = np.full(n, 1.0 / n)
    scratch = np.empty_like(p)
    out: list[ExpectedCycle] = []
    alive = 1.0
    t = 0
    while True:
        if stop.max_cycles is not None and len(out) >= stop.max_cycles:
            break
        if alive <= 0.0 or alive < stop.alive_fraction:
            break
        F, U = _kernels.advance_expected(p, scratch, t, sched.tau_bar, sched.sigma_bar, sched.tau_bar)
        t += sched.tau_bar
        alive = float(p.sum())
        out.append(ExpectedCycle(cycle=len(out), F=float(F), U=float(U), alive=alive))
    return out


# per-walker engine


def init_walkers(params: LatticeParams) -> np.ndarray:
    """1-based start site of each walker, indexed by walker id (same law as the counts)."""
    return _initial_sites(params) + 1


def step_walkers(
    positions: np.ndarray, t: int, params: LatticeParams, ids: Optional[np.ndarray] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Move each walker once at step ``t``.

    ``positions`` holds 1-based sites, with ``n + 1`` marking an exited walker.
    Walker ``ids[i]`` (default ``i``) draws its bit from its own counter stream,
    so any subset of walkers can be advanced independently. Returns the new
    positions and a mask of walkers that exited during this step.
    """
    n = params.n
    if ids is None:
        ids = np.arange(positions.size, dtype=np.uint64)
    key = _rng.derive_key(params.seed, _rng.STREAM_WALKERS)
    bit = _rng.walker_bits(key, t, ids)
    pos = positions.copy()
    alive = pos <= n
    is_open = gate_is_open(t, params.sched)
    at_first = alive & (pos == 1) & (n > 1)
    at_last = alive & (pos == n)
    inner = alive & ~at_first & ~at_last
    pos[inner] += np.where(bit[inner], -1, 1)
    pos[at_first] += np.where(bit[at_first], 0, 1)
    if is_open:
        pos[at_last] = np.where(bit[at_last], n + 1, n - 1 if n > 1 else n)
    else:
        pos[at_last] = np.where(bit[at_last], n, n - 1 if n > 1 else n)
    exited = at_last & (pos == n + 1)
    return pos, exited


def run_walkers(params: LatticeParams, stop: StopRule = StopRule()) -> list[CycleStats]:
    """Same observables as :func:`run`, from the per-walker engine (slow; for diagnostics)."""
    pos = init_walkers(params)
    ids = np.arange(pos.size, dtype=np.uint64)
    N = params.walkers_init
    n, tau_bar = params.n, params.sched.tau_bar
    stats: list[CycleStats] = []
    alive = N
    t = 0
    while True:
        if stop.max_cycles is not None and len(stats) >= stop.max_cycles:
            break
        if alive == 0 or alive < stop.alive_fraction * N:
            break
        F = U = U_open = 0
        for _ in range(tau_bar):
            occ = int(np.count_nonzero(pos == n))
            U += occ
            if gate_is_open(t, params.sched):
                U_open += occ
            pos, exited = step_walkers(pos, t, params, ids)
            F += int(exited.sum())
            t += 1
        alive -= F
        if alive != int(np.count_nonzero(pos <= n)) or pos.min() < 1:
            raise ConservationError(f"cycle {len(stats)}: per-walker bookkeeping mismatch")
        stats.append(CycleStats(cycle=len(stats), F=F, U=U, U_open=U_open, alive=alive))
    return stats
