"""Seed plumbing.

All randomness flows from one root seed. Sub-stages get independent streams
derived from (root, *labels) through a counter-based generator, so adding a
consumer never perturbs the draws of another.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["child_rng", "child_seed"]


def _label_key(label: str | int) -> int:
    if isinstance(label, int):
        return label & 0xFFFFFFFF
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def child_seed(root: int, *labels: str | int) -> np.random.SeedSequence:
    """Derive a seed sequence for the stream named by ``labels``."""
    return np.random.SeedSequence(root, spawn_key=tuple(_label_key(x) for x in labels))


def child_rng(root: int, *labels: str | int) -> np.random.Generator:
    """Independent generator for one named sub-stage."""
    return np.random.Generator(np.random.Philox(child_seed(root, *labels)))
