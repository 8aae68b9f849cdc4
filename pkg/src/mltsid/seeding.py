"""Deterministic seed derivation.

Python's built-in ``hash`` is salted per process, so derived seeds are
built from SHA-256 over a canonical encoding of the parts. The same
(base, parts) pair yields the same child seed on every platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEED_BITS = 63


def derive_seed(base: int, *parts: int | str) -> int:
    """Mix a base seed with labels/indices into a fresh positive seed."""
    h = hashlib.sha256()
    h.update(str(int(base)).encode("ascii"))
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little") & ((1 << _SEED_BITS) - 1)


def derived_rng(base: int, *parts: int | str) -> np.random.Generator:
    """A numpy Generator seeded from ``derive_seed(base, *parts)``."""
    return np.random.default_rng(derive_seed(base, *parts))
