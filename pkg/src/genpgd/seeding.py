"""Deterministic hierarchical seed derivation.

Every random draw in the package flows through a ``numpy.random.Generator``
whose seed is derived from an integer root seed plus a tuple of integer
coordinates (restart index, axis index, trial index, ...).  Derivation is
pure, so changing one leaf of an experiment tree never perturbs another.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError


def check_seed(seed) -> int:
    """Validate that ``seed`` is a plain nonnegative integer and return it."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ContractError(f"seed must be a nonnegative integer, got {seed!r}")
    if seed < 0:
        raise ContractError(f"seed must be nonnegative, got {seed}")
    return int(seed)


def derive_seed(root: int, *coords: int) -> int:
    """Map (root, coords...) to a single derived seed, deterministically."""
    parts = [check_seed(root)] + [check_seed(c) for c in coords]
    return int(np.random.SeedSequence(parts).generate_state(1, dtype=np.uint64)[0])


def spawn_rng(root: int, *coords: int) -> np.random.Generator:
    """A fresh Generator seeded from (root, coords...)."""
    parts = [check_seed(root)] + [check_seed(c) for c in coords]
    return np.random.default_rng(np.random.SeedSequence(parts))
