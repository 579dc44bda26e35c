"""Counter-based random streams.

Every round gets its own 64-bit seed from ``(seed, round_index)`` through the
SplitMix64 finalizer, and each random variate of a round is a further hash of
that round seed with a fixed slot number.  Rounds can therefore be generated
in any order or partition and always produce the same values.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_GOLDEN_U = np.uint64(GOLDEN)
_M1_U = np.uint64(_M1)
_M2_U = np.uint64(_M2)
_LOW32 = np.uint64(0xFFFFFFFF)
_INV32 = 1.0 / 4294967296.0


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_round_seed(seed: int, round_index: int) -> int:
    """64-bit stream seed for one round; pure in both arguments."""
    return mix64(seed + GOLDEN * (round_index + 1))


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z *= _M1_U
    z ^= z >> np.uint64(27)
    z *= _M2_U
    return z ^ (z >> np.uint64(31))


def round_seeds(seed: int, start: int, stop: int) -> np.ndarray:
    """Vectorized :func:`derive_round_seed` for ``start <= i < stop``."""
    idx = np.arange(start + 1, stop + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_array(idx * _GOLDEN_U + np.uint64(seed & MASK64))


def slot_uniform_pair(seeds: np.ndarray, slot: int) -> tuple[np.ndarray, np.ndarray]:
    """Two independent uniforms on [0, 1) per round from hash slot ``slot``.

    Each uniform carries 32 bits of resolution.
    """
    offset = np.uint64((GOLDEN * (slot + 1)) & MASK64)
    with np.errstate(over="ignore"):
        h = _mix64_array(seeds + offset)
    hi = (h >> np.uint64(32)).astype(np.float64) * _INV32
    lo = (h & _LOW32).astype(np.float64) * _INV32
    return hi, lo


class RoundStream:
    """Sequential uniforms for a single round, used by the scalar helpers."""

    def __init__(self, round_seed: int):
        self._seed = round_seed & MASK64
        self._counter = 0

    def random(self) -> float:
        self._counter += 1
        h = mix64(self._seed + GOLDEN * self._counter)
        return (h >> 11) * (1.0 / 9007199254740992.0)
