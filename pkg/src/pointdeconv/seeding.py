"""Named random sub-streams derived from one run seed."""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def rng_for(seed: int, *names) -> np.random.Generator:
    """Independent generator for ``(seed, *names)``, e.g. ``rng_for(7, "augment", epoch, i)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names)))
