"""Deterministic seed derivation.

All randomness in the package flows from integer seeds supplied by the
caller. Derived streams (member initialization, batch order, pool seeding,
per-round retraining) mix the base seed with small integer tags through
``numpy``'s SeedSequence so the streams are independent and reproducible.
Never use ``hash()`` here: it is salted per process.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream tags. Values are arbitrary but frozen: changing them changes
# every derived stream.
BATCH_ORDER = 1
POOL_INIT = 2
ROUND_MODEL = 3
UPPER_BOUND = 4


def normalize_seed(seed: int) -> int:
    """Map any 64-bit integer (including negatives) to a valid rng seed."""
    return int(seed) & _MASK64


def derive_seed(seed: int, *tags: int) -> int:
    """A new seed, deterministic in ``seed`` and the tag path."""
    keys = [normalize_seed(seed)] + [normalize_seed(t) for t in tags]
    return int(np.random.SeedSequence(keys).generate_state(1, dtype=np.uint64)[0])


def member_seed(seed: int, member: int) -> int:
    """Per-member initialization seed: the base seed XOR the member index."""
    return normalize_seed(seed) ^ member
