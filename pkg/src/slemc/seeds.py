"""Deterministic RNG substreams.

Splitting rule (the one documented contract for reproducibility): the
substream for replica/chunk index j of a run seeded with s is

    np.random.default_rng(np.random.SeedSequence(entropy=s, spawn_key=(j,)))

Chunk sizes are fixed by configuration, never by worker count, so runs
are bit-reproducible regardless of how much parallelism is used.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def substreams(seed: int, n: int) -> list[np.random.Generator]:
    return [substream(seed, i) for i in range(n)]
