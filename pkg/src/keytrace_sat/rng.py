"""SplitMix64, the portable generator used for every seeded draw in the package.

Algorithm (Steele, Lea & Flood 2014), all arithmetic mod 2**64::

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

Derived draws:

* ``below(k)``: rejection sampling, discard x < (2**64 - k) % k, return x % k.
* ``uniform()``: (x >> 11) * 2**-53, in [0, 1).
* ``bit()``: top bit of x.

Golden instance files depend on this exact sequence; do not change it.
"""
from __future__ import annotations

MASK64 = (1 << 64) - 1


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, k: int) -> int:
        if k <= 0:
            raise ValueError("bound must be positive")
        threshold = ((1 << 64) - k) % k
        while True:
            x = self.next()
            if x >= threshold:
                return x % k

    def uniform(self) -> float:
        return (self.next() >> 11) * (1.0 / (1 << 53))

    def bit(self) -> bool:
        return bool(self.next() >> 63)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, walking from the back."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
