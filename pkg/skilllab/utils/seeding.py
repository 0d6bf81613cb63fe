"""
Seed derivation

Every random stream in the package is derived from the run seed plus a tuple of
integer keys, so results never depend on the order streams are created in.
"""
import zlib

import numpy as np


def stable_key(text: str) -> int:
    """Process-independent integer key for a string (``hash`` is salted)."""
    return zlib.crc32(text.encode('utf-8'))


def make_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in keys])


def derive_seed(*keys: int) -> int:
    """A 32-bit seed determined by the keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])
