"""Deterministic seed splitting.

Every random stream is derived from one 64-bit root seed: the child seed is
the first 8 bytes of ``blake2b(parent || label...)``. The scheme only uses
the textual repr of the labels, so results are identical across platforms
and process pools.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(parent: int, *labels) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(parent) & MASK64).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(repr(label).encode())
    return int.from_bytes(h.digest(), "little")


def rng_for(parent: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(parent, *labels))
