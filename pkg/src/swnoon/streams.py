"""Seed splitting: every random stream derives from one master seed plus counters."""

from __future__ import annotations

import numpy as np

STREAM_FRINGE = 1
STREAM_FIT = 2
STREAM_SWEEP = 3


def derive_rng(seed: int, *counters: int) -> np.random.Generator:
    """Independent stream for ``(seed, counters...)``.

    The counters form a numpy SeedSequence spawn key, e.g. (STREAM_FRINGE,
    order, point_index); distinct keys give statistically independent
    streams, and the same key always reproduces the same stream.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(c) for c in counters)))


def derive_seed(seed: int, *counters: int) -> int:
    """Integer seed for a sub-run, split from ``seed`` the same way as :func:`derive_rng`."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(c) for c in counters))
    return int(ss.generate_state(2, dtype=np.uint32) @ np.array([1, 2**32], dtype=np.uint64)) >> 1
