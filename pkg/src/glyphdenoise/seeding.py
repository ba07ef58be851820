"""Named sub-stream seed derivation.

All randomness in a run flows from one master seed. Components draw from
named sub-streams (data, init, train, per-sample ids) so each part stays
reproducible on its own and insensitive to the others' draw counts.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, *labels: str | int) -> int:
    """Stable 64-bit child seed from a master seed and a label path."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "big")


def make_rng(master_seed: int, *labels: str | int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *labels))
