"""Portable deterministic random numbers.

All randomness in the package flows through :class:`SplitMix64`, a 64-bit
generator with a fixed, platform-independent bit stream.  Identical seeds
therefore produce identical datasets, weight initializations, and shuffles on
any machine.  Substreams are derived from a master seed with
:func:`derive_seed`, which hashes a sequence of tags (strings or integers)
into a new seed, so independent components never share a stream by accident.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood's mixing constants)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix64(self._state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform double in [lo, hi) with full 53-bit resolution."""
        u = (self.next_u64() >> 11) * 2.0 ** -53
        return lo + (hi - lo) * u

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return np.array([self.uniform(lo, hi) for _ in range(n)])

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def shuffle(self, seq) -> None:
        """In-place Fisher-Yates shuffle of a list or 1-D array."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            tmp = seq[i].copy() if isinstance(seq, np.ndarray) else seq[i]
            seq[i] = seq[j]
            seq[j] = tmp


def derive_seed(seed: int, *tags) -> int:
    """Derive a substream seed from a master seed and a tag sequence.

    Tags may be ints or strings; the derivation absorbs each tag byte-wise
    into a running SplitMix64 mix, so distinct tag sequences give
    (overwhelmingly likely) distinct streams.
    """
    h = _mix64(seed & _MASK64)
    for tag in tags:
        if isinstance(tag, str):
            data = tag.encode("utf-8")
        elif isinstance(tag, (int, np.integer)):
            data = int(tag).to_bytes(8, "little", signed=False) if tag >= 0 \
                else (int(tag) & _MASK64).to_bytes(8, "little")
        else:
            raise TypeError(f"unsupported tag type: {type(tag)!r}")
        for b in data:
            h = _mix64((h + _GAMMA + b) & _MASK64)
    return h
