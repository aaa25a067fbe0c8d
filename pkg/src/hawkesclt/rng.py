"""Reproducible per-replication random streams.

Every replication draws from its own Philox generator keyed by
``(master seed, purpose, *indices)``.  The key never depends on which
worker runs the replication, so results are invariant to thread count.
"""
import numpy as np

PURPOSES = {
    "sim": 0,
    "debias": 1,
    "bootstrap": 2,
    "coupled": 3,
    "cluster": 4,
    "verify": 5,
}


def stream(seed, purpose, *indices):
    """Return an independent ``numpy.random.Generator`` for one key."""
    key = (PURPOSES[purpose],) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
