"""Deterministic seed derivation.

Per-item RNG streams are derived by hashing (base_seed, *parts) with a
stable hash, so parallel or reordered execution never changes outcomes.
Python's builtin hash() is salted per process and must not be used here.
"""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from an arbitrary tuple of ints/strings."""
    key = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_rng(*parts) -> np.random.Generator:
    """Independent numpy Generator for the given key tuple."""
    return np.random.default_rng(derive_seed(*parts))
