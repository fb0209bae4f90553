"""Counter-based random bits.

Every random decision in the lattice model is a fair coin, so the engines only
need random bits addressed by a counter. Values come from the SplitMix64
finalizer applied to ``key + GOLDEN * (counter + 1)``: a bijection of the
counter for a fixed key, so distinct counters never share an output word.
Because nothing depends on call order, results do not change with the way work
is split across threads or processes.
"""
from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# stream ids mixed into the seed when deriving keys
STREAM_INIT = 0
STREAM_COUNTS = 1
STREAM_WALKERS = 2


def derive_key(seed: int, stream: int, *tags: int) -> np.uint64:
    """64-bit key for one random stream, derived from ``seed`` via SeedSequence."""
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    entropy = [int(seed) & 0xFFFFFFFF, int(seed) >> 32]
    ss = np.random.SeedSequence(entropy, spawn_key=(int(stream), *map(int, tags)))
    return ss.generate_state(1, dtype=np.uint64)[0]


def point_seed(seed: int, *tags: int) -> int:
    """Seed for a sub-experiment, e.g. one (sigma_bar, n) grid point."""
    return int(derive_key(seed, 99, *tags))


def mix64(key: np.uint64, counters: np.ndarray) -> np.ndarray:
    """Vectorised SplitMix64 output for ``counters`` (uint64 array) under ``key``."""
    with np.errstate(over="ignore"):
        z = np.uint64(key) + GOLDEN * (counters.astype(np.uint64) + np.uint64(1))
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform_sites(key: np.uint64, count: int, n: int, offset: int = 0) -> np.ndarray:
    """0-based site index in ``[0, n)`` for walkers ``offset .. offset+count-1``.

    Uses the top 32 bits of each walker's word with a multiply-shift reduction;
    the bias is below ``n / 2**32``.
    """
    if not 0 < n < 2**32:
        raise ValueError("n must be in [1, 2**32)")
    ids = np.arange(offset, offset + count, dtype=np.uint64)
    hi = mix64(key, ids) >> np.uint64(32)
    with np.errstate(over="ignore"):
        return ((hi * np.uint64(n)) >> np.uint64(32)).astype(np.int64)


def walker_bits(key: np.uint64, t: int, ids: np.ndarray) -> np.ndarray:
    """One fair bit per walker id at step ``t`` (bool array)."""
    ctr = (np.uint64(t) << np.uint64(32)) | ids.astype(np.uint64)
    return (mix64(key, ctr) & np.uint64(1)).astype(bool)
