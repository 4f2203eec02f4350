"""Seed splitting.

Replica ``i`` of a run with master seed ``s`` uses the stream seed

    splitmix64((s + 0x9E3779B97F4A7C15 * (i + 1)) mod 2**64)

where ``splitmix64`` is the standard 64-bit finalizer
(``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31``).
The stream seed initializes a ``numpy.random.PCG64`` generator.
"""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(z: int) -> int:
    z &= MASK
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK
    z ^= z >> 31
    return z


def replica_seed(master: int, index: int) -> int:
    return splitmix64((master + GOLDEN * (index + 1)) & MASK)


def replica_rng(master: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(replica_seed(master, index)))
