"""Keyed random streams.

Every stochastic stage asks for a generator keyed by ``(seed, stage, *index)``.
The key fully determines the stream, so splitting work across threads never
changes the numbers drawn.
"""
from __future__ import annotations

import zlib

import numpy as np


def stage_key(stage: str) -> int:
    return zlib.crc32(stage.encode("utf-8"))


def stream(seed: int, stage: str, *index: int) -> np.random.Generator:
    """Return a Philox generator for the given key."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(stage_key(stage), *map(int, index)))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, stage: str, *index: int) -> int:
    """Derive a 63-bit integer seed, for components that take plain ints."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(stage_key(stage), *map(int, index)))
    hi, lo = (int(v) for v in ss.generate_state(2, dtype=np.uint32))
    return ((hi << 32) | lo) >> 1
