"""Deterministic, splittable random streams.

Every stream is derived from a master seed plus an integer key path, so a
given piece of work always sees the same random numbers no matter which
worker runs it or in what order.
"""

import zlib

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def cell_key(n: int, d: int, theta: float) -> int:
    """Stable 32-bit identifier for a sweep cell."""
    return zlib.crc32(f"{n}:{d}:{float(theta)!r}".encode())


def as_generator(stream) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    return np.random.default_rng(stream)
