"""Seeding contract: all randomness comes from numpy's PCG64 generator,
keyed by an explicit master seed plus an integer spawn key, so per-trial
substreams are reproducible and platform-independent."""
from __future__ import annotations

import numpy as np


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 stream for (master_seed, key...)."""
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
