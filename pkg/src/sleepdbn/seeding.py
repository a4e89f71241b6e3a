"""Named random substreams derived from one master seed.

``substream(master, name)`` is ``SeedSequence(master, spawn_key=(crc32(name),))``,
so the same (master, name) pair always yields the same stream and distinct
names yield independent ones.
"""
from __future__ import annotations

import zlib

import numpy as np


def substream(master, name: str) -> np.random.SeedSequence:
    if isinstance(master, np.random.SeedSequence):
        return np.random.SeedSequence(master.entropy, spawn_key=tuple(master.spawn_key) + (zlib.crc32(name.encode()),))
    return np.random.SeedSequence(master, spawn_key=(zlib.crc32(name.encode()),))


def generator(master, name: str) -> np.random.Generator:
    return np.random.default_rng(substream(master, name))


def int_seed(master, name: str) -> int:
    """A 32-bit integer seed for APIs that do not take a SeedSequence."""
    return int(substream(master, name).generate_state(1)[0])
