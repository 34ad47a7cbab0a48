"""Counter-based pseudo-random streams built on the SplitMix64 finaliser.

Every random quantity in the package is addressed by ``(seed, *path)`` and a
draw counter, never by generator state, so any sample can be recomputed in
isolation and in any language::

    mix64(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
               z ^= z >> 27; z *= 0x94D049BB133111EB
               z ^= z >> 31                       (all arithmetic mod 2**64)

    key  = mix64(seed)
    key  = mix64(key + G * (p + 1))   for each p in path,  G = 0x9E3779B97F4A7C15
    u64k = mix64(key + G * (k + 1))   k = 0, 1, 2, ...

    uniform double in [0, 1) = (u64k >> 11) * 2**-53
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# Fixed stream tags so unrelated consumers never share a stream.
TAG_PERTURB = 1
TAG_SCENE = 2
TAG_EPISODE = 3


def mix64(z: int) -> int:
    z &= MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class CounterStream:
    """Sequential view over the counter stream ``(seed, *path)``."""

    def __init__(self, seed: int, *path: int):
        key = mix64(seed)
        for p in path:
            key = mix64(key + GOLDEN * (int(p) + 1))
        self.key = key
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.key + GOLDEN * self.counter)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        x = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return lo + (hi - lo) * x

    def integer(self, lo: int, hi: int) -> int:
        """Integer in ``[lo, hi]`` (inclusive), by floor of a uniform."""
        return lo + min(hi - lo, int(self.uniform() * (hi - lo + 1)))

    def unit_vector(self) -> np.ndarray:
        """Uniform direction on the unit sphere (Archimedes' z-slice method)."""
        z = self.uniform(-1.0, 1.0)
        phi = self.uniform(0.0, 2.0 * math.pi)
        r = math.sqrt(max(0.0, 1.0 - z * z))
        return np.array([r * math.cos(phi), r * math.sin(phi), z])

    def choice_index(self, n: int) -> int:
        return self.integer(0, n - 1)
