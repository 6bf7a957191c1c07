"""Deterministic RNG derivation.

Every stochastic component draws from a stream derived from a user-facing
integer seed plus a role path (e.g. ("session", k, "c1")), so independent
parts of a run cannot perturb each other's randomness.
"""

import zlib

import numpy as np


def _as_words(parts):
    words = []
    for p in parts:
        if isinstance(p, str):
            words.append(zlib.crc32(p.encode("utf-8")))
        elif isinstance(p, (int, np.integer)):
            words.append(int(p) & 0xFFFFFFFF)
        else:
            raise TypeError(f"seed path parts must be str or int, got {type(p)!r}")
    return words


def seed_sequence(seed, *path):
    """SeedSequence for ``seed`` specialized by a role path."""
    if isinstance(seed, (tuple, list)):
        entropy = [int(s) & 0xFFFFFFFFFFFFFFFF for s in seed]
    else:
        entropy = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.random.SeedSequence(entropy=entropy, spawn_key=tuple(_as_words(path)))


def rng_for(seed, *path):
    """Deterministic Generator for (seed, *path)."""
    return np.random.default_rng(seed_sequence(seed, *path))


def subseed(seed, *path):
    """Derived integer seed for handing to components that take one."""
    return int(seed_sequence(seed, *path).generate_state(1, np.uint64)[0] >> 1)
