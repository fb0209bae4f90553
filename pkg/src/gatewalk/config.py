"""Flat ``key = value`` experiment configuration with command-line overrides.

Lists are comma separated. Unknown keys are rejected so a typo cannot silently
fall back to a default. Every output file records :meth:`ExperimentConfig.digest`,
a hash of all keys except the ones that cannot change results (``workers``,
``out``).
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .reference import N_VALUES, SIGMA_BARS

_SECTION = "experiment"
_NOT_HASHED = frozenset({"workers", "out"})
SIGMA_RULES = ("critical", "cubic", "zero")


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit status 2."""


def _default_taus() -> tuple[float, ...]:
    # geometric from 0.1 down to 0.001, three points per decade
    return tuple(float(f"{10 ** (-1 - k / 3):.6g}") for k in range(7))


@dataclass(frozen=True)
class ExperimentConfig:
    D: float = 1.0
    L: float = math.pi
    mu: float = 1.0 / math.sqrt(2.0)
    sigma_bar: tuple[int, ...] = SIGMA_BARS
    n: tuple[int, ...] = N_VALUES
    walkers: Optional[int] = None
    seed: int = 0
    init: str = "iid"
    small_n: str = "skip"
    trim_fraction: float = 0.05
    stop_fraction: float = 0.01
    max_cycles: Optional[int] = None
    r_max: int = 1000
    tau: tuple[float, ...] = field(default_factory=_default_taus)
    sigma_rule: str = "critical"
    pde_cells: Optional[int] = None
    pde_cycles: int = 40
    steps_per_open: int = 40
    scheme: str = "implicit"
    u0_file: Optional[str] = None
    workers: int = 1
    out: str = "out"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(msg)

        need(self.D > 0 and self.L > 0, "D and L must be positive")
        need(self.mu >= 0, "mu must be nonnegative")
        need(len(self.sigma_bar) > 0 and len(self.n) > 0, "sigma_bar and n lists must be nonempty")
        need(all(v >= 1 for v in self.sigma_bar), "sigma_bar values must be positive")
        need(all(v >= 1 for v in self.n), "n values must be positive")
        need(self.walkers is None or self.walkers >= 1, "walkers must be positive")
        need(0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer")
        need(self.init in ("iid", "equal"), "init must be 'iid' or 'equal'")
        need(self.small_n in ("skip", "warn"), "small_n must be 'skip' or 'warn'")
        need(0 <= self.trim_fraction < 1, "trim_fraction must lie in [0, 1)")
        need(0 <= self.stop_fraction <= 1, "stop_fraction must lie in [0, 1]")
        need(self.max_cycles is None or self.max_cycles >= 0, "max_cycles must be nonnegative")
        need(self.r_max >= 1, "r_max must be >= 1")
        need(len(self.tau) > 0 and all(t > 0 for t in self.tau), "tau list must be nonempty and positive")
        need(all(b < a for a, b in zip(self.tau, self.tau[1:])), "tau list must be strictly decreasing")
        need(self.sigma_rule in SIGMA_RULES, f"sigma_rule must be one of {SIGMA_RULES}")
        need(self.pde_cells is None or self.pde_cells >= 2, "pde_cells must be >= 2")
        need(self.pde_cycles >= 1, "pde_cycles must be >= 1")
        need(self.steps_per_open >= 10, "steps_per_open must be >= 10")
        need(self.scheme in ("implicit", "explicit"), "scheme must be 'implicit' or 'explicit'")
        need(self.workers >= 1, "workers must be >= 1")

    # serialization

    def items(self) -> list[tuple[str, str]]:
        return [(f.name, _format(getattr(self, f.name))) for f in fields(self)]

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    def digest(self) -> str:
        canon = "\n".join(f"{k}={v}" for k, v in self.items() if k not in _NOT_HASHED)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(clean) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
        parsed = {k: _parse(k, v) if isinstance(v, str) else v for k, v in clean.items()}
        try:
            return replace(self, **parsed)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _format(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_KINDS = {f.name: f.type for f in fields(ExperimentConfig)}


def _scalar(kind: str, text: str, key: str) -> Any:
    try:
        if "int" in kind:
            return int(text, 0)
        if "float" in kind:
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc
    return text


def _parse(key: str, text: str) -> Any:
    kind = str(_KINDS.get(key, "str"))
    text = text.strip()
    if "Optional" in kind and text.lower() in ("", "none"):
        return None
    if kind.startswith("tuple"):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        elem = "int" if "int" in kind else "float"
        return tuple(_scalar(elem, p, key) for p in parts)
    return _scalar(kind, text, key)


def load_config(path: Optional[str | Path] = None) -> ExperimentConfig:
    """Defaults, updated from the flat file at ``path`` when given."""
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    try:
        body = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case (D, L)
    try:
        parser.read_string(f"[{_SECTION}]\n{body}", source=str(p))
    except configparser.Error as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return ExperimentConfig().with_overrides(dict(parser[_SECTION]))
