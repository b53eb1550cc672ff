"""Derivation of independent random streams from one root seed.

Every consumer of randomness asks for a named stream; the stream's generator is
``PCG64(SeedSequence(root_seed, spawn_key=(STREAMS[name],)))``. Adding a new
stream never perturbs existing ones.
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "data": 0,
    "split": 1,
    "init": 2,
    "shuffle": 3,
    "prior": 4,
    "sample": 5,
    "local": 6,
}


def stream(root_seed: int, name: str) -> np.random.Generator:
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(root_seed), spawn_key=(STREAMS[name],))))


def stream_seed(root_seed: int, name: str) -> int:
    """A 63-bit integer seed for APIs that take plain integers."""
    return int(stream(root_seed, name).integers(0, 2**63 - 1))
