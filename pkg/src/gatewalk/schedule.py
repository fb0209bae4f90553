"""Periodic open/closed partition of time shared by the lattice and continuum models.

Every cycle of ``tau_bar`` steps starts with ``sigma_bar`` open steps followed by
``tau_bar - sigma_bar`` closed ones. Cycles are numbered from 0 internally.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class GateSchedule:
    """Gate opening schedule in lattice time steps.

    ``diagnostic=True`` lifts the ``sigma_bar >= 1`` requirement so that a
    permanently closed gate (``sigma_bar == 0``) can be simulated.
    """

    sigma_bar: int
    tau_bar: int
    diagnostic: bool = False

    def __post_init__(self) -> None:
        low = 0 if self.diagnostic else 1
        if int(self.sigma_bar) != self.sigma_bar or int(self.tau_bar) != self.tau_bar:
            raise ValueError("sigma_bar and tau_bar must be integers")
        if self.tau_bar < 1:
            raise ValueError(f"tau_bar must be >= 1, got {self.tau_bar}")
        if not low <= self.sigma_bar <= self.tau_bar:
            raise ValueError(
                f"need {low} <= sigma_bar <= tau_bar, got sigma_bar={self.sigma_bar}, "
                f"tau_bar={self.tau_bar}"
            )

    @property
    def closed_steps(self) -> int:
        return self.tau_bar - self.sigma_bar

    @property
    def duty_ratio(self) -> float:
        """Fraction of each cycle during which the gate is open."""
        return self.sigma_bar / self.tau_bar


def gate_is_open(t: int, sched: GateSchedule) -> bool:
    """True iff step ``t`` falls in the open part of its cycle."""
    if t < 0:
        raise ValueError("time step must be nonnegative")
    return (t % sched.tau_bar) < sched.sigma_bar


def cycle_index(t: int, sched: GateSchedule) -> int:
    """0-based cycle containing step ``t``; cycle i covers ``[i*tau_bar, (i+1)*tau_bar)``."""
    if t < 0:
        raise ValueError("time step must be nonnegative")
    return t // sched.tau_bar
