"""Cosine similarity between capability sets and the membership tests built on it."""

from __future__ import annotations

import math
from collections.abc import Set

DEFAULT_THRESHOLD = 0.65


def capability_similarity(a: Set[str], b: Set[str]) -> float:
    """Cosine similarity of two capability sets viewed as 0/1 vectors.

    ``|a & b| / sqrt(|a| * |b|)``; symmetric, in ``[0, 1]``, and equal to 1
    only when the sets are equal.
    """
    if not a or not b:
        raise ValueError("capability similarity is undefined for an empty set")
    return len(a & b) / math.sqrt(len(a) * len(b))


def is_similar(a: Set[str], b: Set[str], threshold: float = DEFAULT_THRESHOLD) -> bool:
    # inclusive, no rounding of the similarity before the comparison
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    return capability_similarity(a, b) >= threshold


def required_subset(required: Set[str], owned: Set[str]) -> bool:
    return required <= owned
