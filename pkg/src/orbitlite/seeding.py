"""Deterministic RNG streams keyed by (seed, tags...).

Streams are independent per key and reproducible across runs and platforms;
tags are hashed with SHA-256 so stream identity does not depend on Python's
randomized string hashing.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_entropy(tags) -> list[int]:
    h = hashlib.sha256(repr(tags).encode()).digest()
    return [int.from_bytes(h[i : i + 8], "little") for i in range(0, 32, 8)]


def stream(seed: int, *tags) -> np.random.Generator:
    """Independent generator for (seed, *tags)."""
    ss = np.random.SeedSequence(entropy=[int(seed)] + _tag_entropy(tags))
    return np.random.Generator(np.random.PCG64(ss))


def env_streams(seed: int, num_envs: int, *tags) -> list[np.random.Generator]:
    """One independent generator per environment index."""
    return [stream(seed, "env", i, *tags) for i in range(num_envs)]
