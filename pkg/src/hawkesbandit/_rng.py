"""Keyed random streams: every (seed, key...) tuple gets its own independent stream."""
import zlib

import numpy as np


def _key_int(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def seed_sequence(seed, *key):
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_int(k) for k in key))


def stream(seed, *key):
    """Generator for the substream identified by ``key`` (ints or string tags)."""
    return np.random.default_rng(seed_sequence(seed, *key))


def stream_seed(seed, *key):
    """A 31-bit integer seed for the substream identified by ``key``."""
    return int(seed_sequence(seed, *key).generate_state(1)[0] & 0x7FFFFFFF)
