"""Seed derivation for reproducible parallel sampling.

A root seed is split with :class:`numpy.random.SeedSequence`; child ``i``
yields one 64-bit integer that seeds its own generator.  The integer is what
gets recorded next to each sample, so any single sample can be regenerated in
isolation.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

U64_MAX = (1 << 64) - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed <= U64_MAX:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return int(seed)


def derive_seeds(seed: int, n: int) -> list[int]:
    """``n`` child seeds of ``seed``, stable across versions of this package."""
    root = np.random.SeedSequence(check_seed(seed))
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in root.spawn(n)]
