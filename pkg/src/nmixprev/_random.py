"""Seeded random streams.

Every stochastic routine draws from numpy's PCG64 bit generator seeded through
a ``SeedSequence``. Child streams are keyed by integer tuples, so a replicate's
stream depends only on ``(seed, key)`` and never on execution order.
"""

import numpy as np

GENERATOR_NAME = "numpy.random.PCG64 via SeedSequence"


def make_rng(seed, *key):
    """Return a Generator for ``seed`` optionally specialised by ``key``.

    ``seed`` may be an int, a ``SeedSequence`` or an existing ``Generator``
    (returned unchanged when no key is given).
    """
    if isinstance(seed, np.random.Generator):
        if key:
            raise TypeError("cannot derive a keyed stream from a Generator")
        return seed
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *key)))


def derive_seed(seed, *key):
    if isinstance(seed, np.random.SeedSequence):
        if not key:
            return seed
        return np.random.SeedSequence(
            seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(int(k) for k in key)
        )
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
