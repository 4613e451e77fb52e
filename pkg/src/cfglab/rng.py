"""Splittable random streams.

Every randomized operation takes a numpy Generator.  Corpus-scale work
derives one independent stream per item with `stream(seed, index)`, so
results are reproducible regardless of how items are scheduled across
workers.
"""

import numpy as np


def stream(seed, *key):
    """Independent generator for (seed, key...).

    Streams with distinct keys are statistically independent; the same
    (seed, key) always yields the same sequence.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(ss))
