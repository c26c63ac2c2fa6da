"""Deterministic pseudo-randomness built on the splitmix64 stream.

Every stochastic component in the package takes an explicit :class:`Rng`, so
a single integer seed reproduces a run bit-for-bit on any platform.
Independent sub-tasks get their own stream via :meth:`Rng.derive`; generators
are never shared mutably across modules.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1

# splitmix64 constants (Steele, Lea & Flood; Vigna's reference C code).
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_INV_2_53 = 1.0 / (1 << 53)


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class Rng:
    """splitmix64 generator: 64-bit counter state advanced by a fixed gamma.

    The stream depends only on the seed. ``derive`` builds a child seed from
    the parent's original seed plus a tag, without consuming parent state, so
    sub-streams are reproducible regardless of draw order elsewhere.
    """

    __slots__ = ("seed", "_state")

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self._state = self.seed

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        return _mix(self._state)

    def next_uniform(self) -> float:
        """Uniform draw in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * _INV_2_53

    def next_int(self, n: int) -> int:
        """Uniform integer in [0, n); unbiased via rejection sampling."""
        if n < 1:
            raise ValueError(f"next_int requires n >= 1, got {n}")
        limit = (MASK64 + 1) - ((MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def next_gaussian(self) -> float:
        """Standard normal draw (basic Box-Muller; two uniforms per value)."""
        u1 = self.next_uniform()
        while u1 == 0.0:
            u1 = self.next_uniform()
        u2 = self.next_uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle (stdlib-style: mutates, returns None)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_int(i + 1)
            items[i], items[j] = items[j], items[i]

    def derive(self, *keys: int | str) -> "Rng":
        """Child generator keyed on this seed plus the given tags.

        Strings are folded byte-wise, integers word-wise; the result is a
        fresh seed, so repeated calls with equal tags return equal streams.
        """
        h = _mix(self.seed ^ 0xA0761D6478BD642F)
        for key in keys:
            if isinstance(key, str):
                for byte in key.encode("utf-8"):
                    h = _mix(h ^ byte)
            elif isinstance(key, int):
                h = _mix(h ^ (key & MASK64))
            else:
                raise TypeError(f"derive keys must be int or str, got {type(key)!r}")
        return Rng(h)
