import numpy as np


def stream_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the stream addressed by (seed, keys).

    Streams are derived from the seed and an index path, never from the order in which
    work is scheduled, so any chunking of indices reproduces the same draws.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


# Stream namespaces
CENTERS = 1
STARTS = 2
SHORT_RETURN = 3
BOOTSTRAP = 4
BIRKHOFF = 5
TOWER = 6
CHEN_STEIN = 7
