"""Keyed random streams.

Each stream is a Philox generator whose key is derived from a tuple of
integers such as ``(seed, purpose, trajectory_id)``.  Streams never share
state, so the numbers a trajectory sees do not depend on how work is split
across batches or threads.
"""

from __future__ import annotations

import numpy as np

HARVEST = 0
COMMITTOR = 1
SELECTION = 2


def keyed_stream(seed: int, *ids: int) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(i) for i in ids]
    if any(k < 0 for k in key):
        raise ValueError("stream ids must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


class StreamBank:
    """A fixed set of per-trajectory streams drawn from in lock-step chunks."""

    def __init__(self, seed: int, purpose: int, ids):
        self.streams = [keyed_stream(seed, purpose, *np.atleast_1d(i)) for i in ids]

    def __len__(self):
        return len(self.streams)

    def normal(self, steps: int, dim: int, which=None) -> np.ndarray:
        """Standard normals of shape ``(steps, n, dim)`` for the chosen streams."""
        idx = range(len(self.streams)) if which is None else which
        draws = [self.streams[i].standard_normal((steps, dim)) for i in idx]
        if not draws:
            return np.empty((steps, 0, dim))
        return np.stack(draws, axis=1)

    def uniform(self, dim: int) -> np.ndarray:
        return np.stack([g.random(dim) for g in self.streams])
