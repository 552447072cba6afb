"""Deterministic seed derivation for nested pipeline stages."""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(master: int, *parts: int | str) -> int:
    """Derive a child seed from a master seed and a stable path of tags.

    Strings are hashed with crc32 so the result does not depend on
    PYTHONHASHSEED. The same (master, parts) always yields the same seed.
    """
    entropy = [master & 0xFFFFFFFF]
    for part in parts:
        if isinstance(part, str):
            entropy.append(zlib.crc32(part.encode("utf-8")))
        else:
            entropy.append(int(part) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def derive_rng(master: int, *parts: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *parts))
