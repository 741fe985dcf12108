"""Seedable, splittable random streams.

Every random draw in pdmp-kit comes from a stream addressed by a master
seed and an integer key path:

    stream(seed, *key) = Generator(PCG64(SeedSequence(seed, spawn_key=key)))

Conventions used by the engine and experiments:

- mechanism j (0-based) of a run with prefix p draws from key p + (j,)
- key p + (n_mechanisms,) is the run's auxiliary stream (initial state)
- replica r of an experiment runs with prefix (n_mechanisms + r,)

Streams with different keys are statistically independent, and the same
(seed, key) always reproduces the same sequence.
"""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator addressed by `seed` and the key path `key`."""
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def mechanism_streams(seed: int, prefix: tuple[int, ...], n_mechanisms: int) -> list[np.random.Generator]:
    """One independent stream per mechanism, keyed by mechanism index."""
    return [stream(seed, *prefix, j) for j in range(n_mechanisms)]


def auxiliary_stream(seed: int, prefix: tuple[int, ...], n_mechanisms: int) -> np.random.Generator:
    """Stream reserved for initial-state draws of a run."""
    return stream(seed, *prefix, n_mechanisms)


def replica_prefix(n_mechanisms: int, replica: int) -> tuple[int, ...]:
    """Stream prefix of replica `replica`: stream id = mechanism count + replica."""
    return (n_mechanisms + replica,)
