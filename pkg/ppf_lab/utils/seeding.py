"""Counter-based seed derivation so any sample / component is reproducible alone."""
from __future__ import annotations

import zlib

import numpy as np


def _tag_word(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def derive_seed(run_seed: int, tag: str) -> int:
    """A 64-bit child seed for a named component of a run."""
    seq = np.random.SeedSequence([int(run_seed), _tag_word(tag)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def sample_rng(seed: int, k: int) -> np.random.Generator:
    """Generator for sample *k*; independent of every other index."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k)]))


__all__ = ["derive_seed", "sample_rng"]
