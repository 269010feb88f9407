"""Deterministic RNG derivation.

Every stochastic operation derives a private stream from a global seed
plus a string key, so results do not depend on call order, thread
count, or interpreter hash randomization.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(*parts: object) -> int:
    """Map (seed, key, ...) parts to a stable 64-bit integer."""
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(*parts: object) -> random.Random:
    """A `random.Random` seeded from the derived 64-bit value."""
    return random.Random(derive_seed(*parts))
