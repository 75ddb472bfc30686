"""Deterministic seed derivation for parallel-safe reproducibility.

Every stochastic operation in the pipeline draws its seed from the identity
of the work item (global seed, video id, frame indices, purpose tag), never
from execution order, so results are identical at any parallelism degree.
"""
from __future__ import annotations

import hashlib


def derive_seed(*parts: object) -> int:
    """Hash arbitrary parts into a stable 64-bit seed."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
