"""Exact absorption constant of the gated lattice and its sqrt(r) law.

``alpha(r)`` is the expected number of walkers that leave through the gate in
one open window of ``r`` steps, per unit occupancy near the gate. It equals the
sum over starting offsets ``y = 1..r`` of the probability that a simple
symmetric walk first reaches ``+y`` within ``r`` steps:

    alpha(r) = sum_{y=1}^{r} y sum_{h=y, h+y even}^{r} C(h, (h+y)/2) / (h 2^h)

All values are exact :class:`fractions.Fraction` objects; floats only appear in
the normalised ratios.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Optional

import numpy as np

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
BRUTE_FORCE_MAX_R = 24


class _AlphaCache:
    """Incremental table of alpha(r) built from successive Pascal rows.

    Reordering the double sum by h makes alpha(r) - alpha(r-1) the h = r slice,
    so extending the table needs only the binomial row of the new h.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.row = [1]  # C(h, .) for the last processed h
        self.h = 0
        self.alpha = [Fraction(0)]
        self.even = [Fraction(0)]  # contributions with h even
        self.odd = [Fraction(0)]

    def extend(self, r: int) -> None:
        with self._lock:
            row, h = self.row, self.h
            alpha, even, odd = self.alpha[-1], self.even[-1], self.odd[-1]
            while h < r:
                row = [1] + [a + b for a, b in zip(row, row[1:])] + [1]
                h += 1
                # j = (h + y)/2 runs over ceil((h+1)/2) .. h, with y = 2j - h
                inner = sum((2 * j - h) * row[j] for j in range((h + 2) // 2, h + 1))
                term = Fraction(inner, h << h)
                alpha += term
                if h % 2 == 0:
                    even += term
                else:
                    odd += term
                self.alpha.append(alpha)
                self.even.append(even)
                self.odd.append(odd)
            self.row, self.h = row, h


_CACHE = _AlphaCache()


def _check_r(r: int) -> None:
    if int(r) != r or r < 1:
        raise ValueError(f"r must be a positive integer, got {r!r}")


def alpha_exact(r: int) -> Fraction:
    """alpha(r) as an exact rational (memoised across calls)."""
    _check_r(r)
    if r > _CACHE.h:
        _CACHE.extend(r)
    return _CACHE.alpha[r]


def alpha_even_odd(r: int) -> tuple[Fraction, Fraction]:
    """Split of alpha(r) into the even-offset and odd-offset parts.

    Offsets y and lengths h share parity, so these are the partial sums over
    even and odd h. For even r they are the even/odd double sums whose total
    is alpha(r).
    """
    _check_r(r)
    alpha_exact(r)
    return _CACHE.even[r], _CACHE.odd[r]


def alpha_brute_force(r: int) -> Fraction:
    """alpha(r) by enumerating all 2**r sign paths; independent of the formula above.

    A walker ``y`` sites from the gate is absorbed within ``r`` steps iff the
    running maximum of its path reaches ``y``, so summing over offsets gives
    ``E[max(0, running max)]``, taken exactly over the enumerated paths.
    """
    _check_r(r)
    if r > BRUTE_FORCE_MAX_R:
        raise ValueError(f"brute force limited to r <= {BRUTE_FORCE_MAX_R}, got {r}")
    total = 0
    block = 1 << min(r, 16)
    shifts = np.arange(r, dtype=np.uint32)
    for start in range(0, 1 << r, block):
        codes = np.arange(start, start + block, dtype=np.uint32)
        steps = ((codes[:, None] >> shifts) & 1).astype(np.int8) * 2 - 1
        running_max = np.cumsum(steps, axis=1, dtype=np.int16).max(axis=1)
        total += int(np.clip(running_max, 0, None).sum())
    return Fraction(total, 1 << r)


def alpha_even_double(r: int) -> Fraction:
    """Even part of alpha(r) from its double-sum definition (r even).

    sum_{k=1}^{r/2} 2k sum_{s=k}^{r/2} C(2s, s+k) / (2s 2^{2s}); binomials are
    produced along each row C(2s, s+k) from the central coefficient.
    """
    if r < 2 or r % 2:
        raise ValueError(f"r must be an even integer >= 2, got {r!r}")
    return alpha_even_double_table(r)[-1]


def alpha_even_double_table(r_max: int) -> list[Fraction]:
    """Values of :func:`alpha_even_double` for r = 2, 4, ..., r_max."""
    out: list[Fraction] = []
    acc = Fraction(0)
    central = 1  # C(2s, s)
    for s in range(1, r_max // 2 + 1):
        central = central * 2 * (2 * s - 1) // s
        c = central
        inner = 0
        for k in range(1, s + 1):
            c = c * (s - k + 1) // (s + k)  # C(2s, s+k)
            inner += 2 * k * c
        acc += Fraction(inner, (2 * s) << (2 * s))
        out.append(acc)
    return out


def alpha_even_closed(r: int) -> Fraction:
    """Single-sum form of the even part: sum_{s=1}^{r/2} C(2s, s) / 2^{2s+1}."""
    if r < 2 or r % 2:
        raise ValueError(f"r must be an even integer >= 2, got {r!r}")
    return alpha_even_closed_table(r)[-1]


def alpha_even_closed_table(r_max: int) -> list[Fraction]:
    out: list[Fraction] = []
    acc = Fraction(0)
    central = 1
    for s in range(1, r_max // 2 + 1):
        central = central * 2 * (2 * s - 1) // s
        acc += Fraction(central, 1 << (2 * s + 1))
        out.append(acc)
    return out


def alpha_asymptotic_ratio(r: int) -> float:
    """alpha(r)/sqrt(r); tends to sqrt(2/pi) ~ 0.797885."""
    return float(alpha_exact(r)) / math.sqrt(r)


def rough_estimate(r: int) -> float:
    """Central-limit estimate sqrt(r/2); right growth, not a tight value."""
    return math.sqrt(r / 2)


def ratio_increases(r: int) -> bool:
    """Exact test of alpha(r+1)/sqrt(r+1) > alpha(r)/sqrt(r), squared to stay rational."""
    a, b = alpha_exact(r), alpha_exact(r + 1)
    # cross-multiplied integers; Fraction products would renormalise huge gcds
    lhs = b.numerator**2 * a.denominator**2 * r
    rhs = a.numerator**2 * b.denominator**2 * (r + 1)
    return lhs > rhs


def ratio_difference_decimal(r: int, digits: int = 40) -> Decimal:
    """High-precision alpha(r+1)/sqrt(r+1) - alpha(r)/sqrt(r) from the exact rationals."""
    a, b = alpha_exact(r), alpha_exact(r + 1)
    with localcontext() as ctx:
        ctx.prec = digits
        qa = Decimal(a.numerator) / Decimal(a.denominator) / Decimal(r).sqrt()
        qb = Decimal(b.numerator) / Decimal(b.denominator) / Decimal(r + 1).sqrt()
        return qb - qa


@dataclass
class ScanResult:
    """Outcome of :func:`monotonicity_scan`.

    ``r0`` is None when the last scanned difference is not positive.
    ``diffs[i]`` and ``increasing[i]`` refer to r = i + 1.
    """

    r_max: int
    r0: Optional[int]
    diffs: list[float] = field(repr=False)
    increasing: list[bool] = field(repr=False)

    @property
    def found(self) -> bool:
        return self.r0 is not None


def monotonicity_scan(r_max: int) -> ScanResult:
    """Smallest r0 with alpha(r)/sqrt(r) strictly increasing on [r0, r_max].

    Only the scanned range is examined; nothing is claimed beyond ``r_max``.
    Signs come from exact rational comparisons, differences are floats.
    """
    if r_max < 2:
        raise ValueError("r_max must be >= 2")
    alpha_exact(r_max)
    ratios = [alpha_asymptotic_ratio(r) for r in range(1, r_max + 1)]
    diffs = [ratios[i + 1] - ratios[i] for i in range(r_max - 1)]
    increasing = [ratio_increases(r) for r in range(1, r_max)]
    r0: Optional[int] = None
    for i in range(len(increasing) - 1, -1, -1):
        if not increasing[i]:
            break
        r0 = i + 1
    return ScanResult(r_max=r_max, r0=r0, diffs=diffs, increasing=increasing)


@dataclass
class AlphaTable:
    r_max: int
    alpha: dict[int, Fraction]
    alpha_even: dict[int, Fraction]
    alpha_odd: dict[int, Fraction]
    ratio: dict[int, float]


def alpha_table(r_max: int) -> AlphaTable:
    _check_r(r_max)
    alpha_exact(r_max)
    rs = range(1, r_max + 1)
    return AlphaTable(
        r_max=r_max,
        alpha={r: _CACHE.alpha[r] for r in rs},
        alpha_even={r: _CACHE.even[r] for r in rs},
        alpha_odd={r: _CACHE.odd[r] for r in rs},
        ratio={r: float(_CACHE.alpha[r]) / math.sqrt(r) for r in rs},
    )
