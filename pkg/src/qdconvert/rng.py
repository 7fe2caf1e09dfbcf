"""Seeded random streams.

Every stochastic stage draws from its own Philox4x64 stream derived from the
run seed and a stage key, so adding or removing a stage never shifts the
draws seen by another one.
"""

import zlib

import numpy as np

RNG_ALGORITHM = "numpy.random.Philox (Philox4x64-10) seeded via SeedSequence(seed, spawn_key)"

SEED_MAX = 2**64 - 1


def stage_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed, *key) -> np.random.Generator:
    """Return a Philox generator for ``seed`` and a tuple of stage keys.

    String keys are hashed with CRC32; integers are used verbatim.
    """
    if isinstance(seed, np.random.Generator):
        if key:
            raise TypeError("stage keys cannot be combined with an existing Generator")
        return seed
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    spawn_key = tuple(stage_key(k) if isinstance(k, str) else int(k) for k in key)
    ss = np.random.SeedSequence(seed, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))
