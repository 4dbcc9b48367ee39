"""Seeded, platform-portable random streams.

Every random draw in the package goes through :func:`make_rng`, which wraps
numpy's Philox-4x64 counter-based bit generator.  Philox output depends only
on (key, counter), so a given seed reproduces the same stream on any
platform and numpy version that ships Philox.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("seed keys must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(master: int, *keys) -> int:
    """Derive a 63-bit child seed from ``master`` and any number of keys.

    Keys may be non-negative ints or anything with a stable ``str``.
    """
    entropy = [_key_to_int(master)] + [_key_to_int(k) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


def make_rng(seed: int, *keys) -> np.random.Generator:
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.Generator(np.random.Philox(_key_to_int(seed)))
