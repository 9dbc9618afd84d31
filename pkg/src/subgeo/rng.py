"""Seedable random streams.

Every generator is a Philox (counter-based, 64-bit) bit generator keyed by a
``SeedSequence``.  Independent streams for replications or grid points are
derived from ``(seed, index)`` so results do not depend on evaluation order.
"""

import numpy as np


def make_rng(seed=None):
    """Return a Philox-backed ``Generator`` for ``seed``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def stream(seed, index):
    """Independent generator number ``index`` derived from ``seed``."""
    ss = np.random.SeedSequence(seed, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def streams(seed, n):
    return [stream(seed, i) for i in range(n)]
