# utils/rng_utils.py
"""Counter-based random streams for reproducible simulations.

Every stream is a Philox generator keyed by (seed, stream tag, indices), so the
numbers a subject or sample receives never depend on the order in which work
is scheduled.
"""

from enum import IntEnum
from typing import Iterable

import numpy as np


class Stream(IntEnum):
    ANATOMY = 0
    BETWEEN_SCAN = 1
    WITHIN_SCAN = 2


def stream_rng(seed: int, stream: Stream, *indices: int) -> np.random.Generator:
    """Independent generator for (seed, stream, *indices); indices must be non-negative ints"""
    key = _spawn_key(stream, indices)
    sequence = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=key)
    return np.random.Generator(np.random.Philox(sequence))


def _spawn_key(stream: Stream, indices: Iterable[int]) -> tuple:
    key = [int(stream)]
    for i in indices:
        i = int(i)
        if i < 0:
            raise ValueError(f"stream indices must be non-negative, got {i}")
        key.append(i)
    return tuple(key)
