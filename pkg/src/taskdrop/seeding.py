"""Deterministic RNG stream derivation.

Every stochastic component draws from its own numpy Generator, derived from a
base seed plus a stable stream path. Streams never interact, so adding draws
to one component cannot shift any other component's sequence.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    """Stable identifiers for independent randomness consumers."""

    FAMILY = 1
    EMBEDDING = 2
    TRAIN_DATA = 3
    TEST_DATA = 4
    ORDERINGS = 5
    ENCODER_INIT = 6
    HEAD_INIT = 7
    TASK_MASKS = 8
    DROPOUT = 9
    BATCH_SHUFFLE = 10
    RUN = 11
    JOINT = 12
    PAIRWISE = 13


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for ``path`` under ``seed``; stable across runs and platforms."""
    key = tuple(int(p) for p in path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse (seed, path) into a fresh 64-bit seed."""
    key = tuple(int(p) for p in path)
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])
