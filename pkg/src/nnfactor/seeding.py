"""Deterministic substreams derived from one top-level seed.

Every consumer of randomness (fold assignment, DGP draws, replication
loops) pulls a named child stream so results do not depend on evaluation
order or worker scheduling.
"""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def seed_sequence(seed: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))


def rng_for(seed: int, *path) -> np.random.Generator:
    """Generator for the substream identified by ``path``."""
    return np.random.default_rng(seed_sequence(seed, *path))


def child_seed(seed: int, *path) -> int:
    """A 32-bit integer seed for the substream (for APIs that take ints)."""
    return int(seed_sequence(seed, *path).generate_state(1, dtype=np.uint32)[0])
