"""Deterministic random streams.

Every random quantity derives from one integer seed and a stream key:
``stream(seed, *key)`` seeds a PCG64 generator from
``SeedSequence(seed, spawn_key=key)``. Distinct keys give statistically
independent streams, so each subcommand can be re-run on its own and
reproduce bit-for-bit.
"""

import numpy as np

# stream ids
GENERATE = 0
ALPHA = 1
SOLVE = 2
CHECK = 3
SAMPLE = 4
SIGNAL = 5
NOISE = 6


def stream(seed, *key):
    key = tuple(int(k) for k in key)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))
