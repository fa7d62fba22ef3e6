"""Deterministic PRNG primitives for reproducible splits.

splitmix64 + Fisher-Yates is used for every train/test split so that a
given seed reproduces the exact same split in any implementation language
or platform (pure 64-bit integer arithmetic, no float state).
"""

from __future__ import annotations

from typing import Sequence, TypeVar

_MASK64 = (1 << 64) - 1

T = TypeVar("T")


class SplitMix64:
    """splitmix64 stream; state advances by the golden-gamma constant."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_below(self, n: int) -> int:
        # Modulo reduction; the bias is ~n/2^64 and irrelevant at our scale.
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def next_float(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53


def shuffled(items: Sequence[T], seed: int) -> list[T]:
    """Fisher-Yates shuffle driven by a splitmix64 stream; input untouched."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next_below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out
