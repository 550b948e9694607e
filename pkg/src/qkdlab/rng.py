"""Seeded, splittable random streams.

Every stochastic quantity is drawn from a stream identified by the session
seed plus a fixed key, so a run is reproducible from its top-level seed and
adding a new consumer never perturbs existing ones.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def stream(seed: int, *key) -> np.random.Generator:
    """Generator for ``(seed, *key)``; keys may mix ints and strings."""
    if seed is None:
        raise ValueError("a seed is required; implicit entropy is not allowed")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key) -> int:
    """Integer sub-seed, for handing a stream to code that wants a seed."""
    return int(stream(seed, "derive", *key).integers(0, 2**63 - 1))
