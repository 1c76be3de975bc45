"""Derived random streams.

Every consumer of randomness gets its own ``Generator`` built from the run's
root seed plus a ``(purpose, *keys)`` spawn key, so that a client's
minibatch order in round ``r`` never depends on what other clients or
components drew before it.
"""
from __future__ import annotations

import numpy as np

PURPOSES = {
    "data": 1,
    "split": 2,
    "partition": 3,
    "init": 4,
    "sampling": 5,
    "minibatch": 6,
}


def derive_rng(root_seed: int, purpose: str, *keys: int) -> np.random.Generator:
    code = PURPOSES[purpose]
    ss = np.random.SeedSequence(int(root_seed), spawn_key=(code, *(int(k) for k in keys)))
    return np.random.default_rng(ss)
