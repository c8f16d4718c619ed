"""Named, independent random streams derived from one integer seed."""

import zlib

import numpy as np

# row and rep indices are packed into the low 40 bits of a child seed
_FIELD_BITS = 20
_FIELD_MAX = 1 << _FIELD_BITS


def stream(seed: int, name: str) -> np.random.Generator:
    """Generator for subsystem ``name``; streams never share state."""
    if seed < 0:
        raise ValueError("seeds must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


def child_seed(master_seed: int, row: int, rep: int) -> int:
    """Injective map (master_seed, row, rep) -> run seed."""
    if master_seed < 0:
        raise ValueError("seeds must be non-negative")
    if not (0 <= row < _FIELD_MAX and 0 <= rep < _FIELD_MAX):
        raise ValueError(f"row and rep must lie in [0, {_FIELD_MAX})")
    return (master_seed << (2 * _FIELD_BITS)) | (row << _FIELD_BITS) | rep


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
