"""Counter-based deterministic random stream.

The fuzz loop, the store sampler, and every mutation rule draw from an
RngStream.  Draws are derived from (seed, counter) with the splitmix64
finalizer, so a stream is a pure function of its seed: identical seeds
yield identical draw sequences on every platform, and campaigns can be
replayed bit-for-bit.  Integer draws use only 64-bit modular arithmetic;
`normal()` goes through libm (log/cos) and is stable per libm build.
"""

from __future__ import annotations

import hashlib
import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4B9C15


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


class RngStream:
    """Deterministic uint64 stream with uniform/normal helpers."""

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0) -> None:
        self.seed = seed & _MASK64
        self.counter = counter

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed:#x}, counter={self.counter})"

    def u64(self) -> int:
        self.counter += 1
        return _mix((self.seed + self.counter * _GAMMA) & _MASK64)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of entropy."""
        return (self.u64() >> 11) * 2.0**-53

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in the inclusive range [lo, hi]."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        n = hi - lo + 1
        # Rejection sampling keeps the draw exactly uniform.
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.u64()
            if u < limit:
                return lo + u % n

    def coin(self, p: float = 0.5) -> bool:
        return self.random() < p

    def choice(self, seq):
        if not seq:
            raise ValueError("cannot choose from an empty sequence")
        return seq[self.randint(0, len(seq) - 1)]

    def normal(self) -> float:
        """Standard normal via Box-Muller."""
        u1 = self.random()
        while u1 == 0.0:
            u1 = self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def child(self, label: str) -> "RngStream":
        """Independent stream derived from (seed, label).

        Used to give each per-API fuzz loop its own stream so campaigns
        are reproducible regardless of API scheduling order.
        """
        h = hashlib.blake2b(digest_size=8)
        h.update(self.seed.to_bytes(8, "little"))
        h.update(label.encode("utf-8"))
        return RngStream(int.from_bytes(h.digest(), "little"))
