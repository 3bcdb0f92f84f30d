"""Deterministic random-stream plumbing.

Every sampler takes a ``seed`` which may be an int or a
``numpy.random.SeedSequence``.  Replicated experiments derive one
independent substream per replicate index with :func:`substream`, so the
outcome of replicate ``i`` never depends on how replicates are batched or
parallelised.
"""

from __future__ import annotations

import numpy as np

Seed = int | np.random.SeedSequence


def as_seed_sequence(seed: Seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def generator(seed: Seed) -> np.random.Generator:
    """PCG64 generator for the given seed."""
    return np.random.default_rng(as_seed_sequence(seed))


def substream(seed: Seed, *key: int) -> np.random.SeedSequence:
    """Child stream identified by ``key`` (e.g. a replicate index)."""
    base = as_seed_sequence(seed)
    return np.random.SeedSequence(
        entropy=base.entropy,
        spawn_key=base.spawn_key + tuple(int(k) for k in key),
    )
