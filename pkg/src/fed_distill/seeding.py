"""Hierarchical seed derivation.

All randomness in a run flows from one master seed; each role (partition,
client training, classifier head, ...) gets an isolated child seed derived
from the path ``master/role/index...``. Results therefore do not depend on
the order in which clients are scheduled.
"""

from __future__ import annotations

import hashlib

_SEED_MASK = (1 << 63) - 1


def derive_seed(master_seed: int, role: str, *index: int | str) -> int:
    """Derive a 63-bit child seed from ``(master_seed, role, *index)``."""
    path = "/".join([str(master_seed), role, *(str(i) for i in index)])
    digest = hashlib.sha256(path.encode()).digest()
    return int.from_bytes(digest[:8], "big") & _SEED_MASK


def seed_key(role: str, *index: int | str) -> str:
    """Name a derived seed in the run's seed ledger."""
    return "/".join([role, *(str(i) for i in index)])
