"""Deterministic seed derivation shared by every stochastic component."""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 output step on a 64-bit state."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *path: int) -> int:
    """Derive a child stream seed from ``seed`` and an index path.

    ``derive_seed(s, i)`` differs for each ``i`` and is stable across
    processes, so parallel workers get reproducible independent streams.
    """
    x = splitmix64(int(seed) & MASK64)
    for index in path:
        x = splitmix64(x ^ ((int(index) * GOLDEN_GAMMA) & MASK64))
    return x


def rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *path))
