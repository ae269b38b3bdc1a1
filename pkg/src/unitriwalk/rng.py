"""Seeded random streams.

Every random quantity in the package is drawn from a Philox (counter-based)
generator keyed by a 64-bit seed plus a tuple of integer stream keys, so a
batch of trajectories can be split into independent, order-free streams.
Seed 0 is reserved for test fixtures.
"""

import numpy as np

SEED_LIMIT = 2**64


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < SEED_LIMIT:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed, *keys):
    """Return the generator for stream ``keys`` under ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
