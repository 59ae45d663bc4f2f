"""Deterministic sub-seed derivation.

All randomness in the toolkit flows from one 64-bit seed; independent
substreams are derived by hashing the seed together with a purpose string or
an example index. Substreams feed ``random.Random`` (MT19937), which is
portable and stable across platforms for a fixed derived seed.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(seed: int, *parts: object) -> int:
    """Hash (seed, parts...) into a new 64-bit seed."""
    material = ":".join([str(seed), *(str(p) for p in parts)])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def substream(seed: int, *parts: object) -> random.Random:
    return random.Random(derive_seed(seed, *parts))
