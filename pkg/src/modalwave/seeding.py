"""Named random sub-streams derived from one run seed.

Every stream is ``default_rng([seed, stream_id, *extra])`` so arms of a
comparison that share a seed also share scene, batch, noise and init draws.
"""

from __future__ import annotations

import numpy as np

STREAMS = {"init": 0, "batch": 1, "noise": 2, "scene-gen": 3, "placement": 4}


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}; known: {sorted(STREAMS)}")
    return np.random.default_rng([int(seed), STREAMS[name], *map(int, extra)])
