"""Seed plumbing: every random draw in the project flows from one run seed.

Named substreams keep components independently perturbable: changing how the
augmentation stream is consumed, say, cannot shift world generation.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream"]


def substream(seed: int, name: str) -> np.random.Generator:
    """Deterministic generator for (seed, name); stable across runs."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, tag]))
