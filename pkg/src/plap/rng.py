"""Seeded, splittable random streams.

Every stochastic routine takes an explicit seed. A seed may be an int, a
``numpy.random.SeedSequence`` or an existing ``Generator`` (used as-is).
"""
from __future__ import annotations

import numpy as np


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def split_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    """Independent child streams; child ``k`` does not depend on ``count``."""
    return np.random.SeedSequence(seed).spawn(count)
