"""Named deterministic RNG substreams derived from a single run seed.

Every stochastic component draws from its own substream so any part of a run
can be regenerated bit-exactly without replaying the rest, and so results do
not depend on how work is split across processes.
"""

from __future__ import annotations

import numpy as np

STREAM_SCENARIO = 1
STREAM_SHADOWING = 2
STREAM_FADING = 3
STREAM_ALLOC = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator seeded by (seed, *key); identical arguments give identical streams."""
    entropy = (int(seed),) + tuple(int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(entropy))
