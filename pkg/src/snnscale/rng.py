"""Seeded, independent random streams.

Every consumer of randomness (a population's parameter draws, its runtime
noise, a synapse group's connectivity, ...) gets its own stream keyed by
``(owner, purpose)``.  The splitting rule is::

    SeedSequence(entropy=global_seed, spawn_key=(crc32(owner), crc32(purpose)))

so the stream for one owner never depends on how many draws another owner
made.  Changing a synapse group's out-degree therefore leaves neuron
parameters untouched.
"""

import zlib

import numpy as np

SEED_MAX = 2**64 - 1


def _key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def seed_sequence(global_seed: int, owner: str, purpose: str) -> np.random.SeedSequence:
    if not 0 <= global_seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {global_seed}")
    return np.random.SeedSequence(entropy=global_seed, spawn_key=(_key(owner), _key(purpose)))


def stream(global_seed: int, owner: str, purpose: str) -> np.random.Generator:
    """Return the generator for ``(owner, purpose)`` under ``global_seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(global_seed, owner, purpose)))


def derive_seed(global_seed: int, owner: str, purpose: str = "seed") -> int:
    """A 64-bit integer seed derived with the same splitting rule."""
    state = seed_sequence(global_seed, owner, purpose).generate_state(1, dtype=np.uint64)
    return int(state[0])
