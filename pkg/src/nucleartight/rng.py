"""Counter-based random streams for reproducible parallel Monte Carlo.

Every stochastic routine in this package draws from a Philox generator whose
key is a pure function of ``(seed, purpose-tag, indices)``.  Work units (one
Monte Carlo repetition, one initial condition, ...) therefore regenerate
bit-for-bit no matter how they are scheduled across threads, and streams with
different tags or indices never overlap.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    """Return an independent generator keyed by ``(seed, tag, index...)``.

    Parameters
    ----------
    seed : int
        Global experiment seed (any nonnegative integer, u64 range).
    tag : str
        Purpose tag, e.g. ``"particles"`` or ``"initial"``.  Streams with
        different tags are independent even for equal indices.
    index : int
        Zero or more nonnegative stream indices (repetition number, ...).
    """
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    if any(i < 0 for i in index):
        raise ValueError("stream indices must be nonnegative")
    tag_code = zlib.crc32(tag.encode("utf-8"))
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag_code, *index))
    return np.random.Generator(np.random.Philox(seq))
