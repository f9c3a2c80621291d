"""Named-stream random number splitting.

Every piece of randomness in the library descends from a single user seed.
Components ask for a child generator under a (name, index...) path, so the
same seed always yields the same stream regardless of call order elsewhere.
"""

import zlib

import numpy as np


def _name_key(name):
    if isinstance(name, int):
        return name & 0xFFFFFFFF
    return zlib.crc32(str(name).encode("utf-8"))


def child_rng(seed, *names):
    """Return a np.random.Generator for the stream (seed, *names).

    Names may be strings or integers; the mapping is stable across runs
    and platforms.
    """
    key = tuple(_name_key(n) for n in names)
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))
