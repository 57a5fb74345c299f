"""Counter-based random streams: (seed, stream id) -> reproducible Philox generator.

Stream ids are strings or integers; strings are mapped through CRC-32 so a
name always selects the same substream on every platform.
"""
from __future__ import annotations

import zlib

import numpy as np

ALGORITHM = "Philox4x64-10 keyed by SeedSequence(seed, stream)"


def stream_key(stream: str | int) -> int:
    if isinstance(stream, str):
        return zlib.crc32(stream.encode("utf-8"))
    if stream < 0:
        raise ValueError("stream ids must be non-negative")
    return int(stream)


def substream(seed: int, stream: str | int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream_key(stream)])))


def child_seed(seed: int, stream: str | int) -> int:
    """A 63-bit integer seed for code that takes plain integer seeds."""
    return int(np.random.SeedSequence([int(seed), stream_key(stream)]).generate_state(1, np.uint64)[0] >> 1)
