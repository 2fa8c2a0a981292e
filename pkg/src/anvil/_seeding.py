import zlib

import numpy as np


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


def derive_rng(seed, *keys):
    """Independent generator for the stream identified by ``(seed, *keys)``.

    Streams depend only on their keys, so serial and parallel callers see the
    same numbers.
    """
    entropy = [int(seed) & 0xFFFFFFFF] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
