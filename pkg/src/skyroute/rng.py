"""Named, independent random streams derived from one run seed."""
from __future__ import annotations

import numpy as np

# Stable stream ids; never renumber, or old runs stop reproducing.
STREAMS = {"map": 0, "init": 1, "exploration": 2, "replay": 3}


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name],)))
