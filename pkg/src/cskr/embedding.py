"""Text embedders for memory clustering.

The default embedder is a deterministic hashed bag-of-words: lowercase, split
on non-alphanumerics, FNV-1a each token into a fixed number of buckets, count
and L2-normalize.  Empty text maps to the first basis vector by convention.
It stands in for an encoder model wherever bit-reproducibility matters; a
remote embedding service can be plugged in through the same interface.
"""

from __future__ import annotations

import re
from typing import Protocol

import numpy as np

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")

_FNV_OFFSET = 2166136261
_FNV_PRIME = 16777619


def fnv1a32(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFF
    return h


class Embedder(Protocol):
    identifier: str

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Deterministic unit-norm bag-of-hashed-tokens embedding."""

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.identifier = f"fnv1a-bow-{dim}"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        tokens = [t for t in _TOKEN_SPLIT.split(text.lower()) if t]
        if not tokens:
            vec[0] = 1.0
            return vec
        for tok in tokens:
            vec[fnv1a32(tok.encode("utf-8")) % self.dim] += 1.0
        return vec / np.linalg.norm(vec)


def default_embed(text: str, dim: int = 256) -> np.ndarray:
    return HashingEmbedder(dim).embed(text)
