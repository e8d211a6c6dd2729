"""Sub-seed derivation: every random stream comes from one top-level seed."""

import zlib

import numpy as np


def derive_seed(seed: int, name: str, index: int = 0) -> np.random.SeedSequence:
    """Seed sequence keyed by ``(seed, crc32(name), index)``."""
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8")), int(index)])


def derive_rng(seed: int, name: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, name, index))
