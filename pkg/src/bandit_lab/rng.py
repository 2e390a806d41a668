"""Reproducible random streams.

Every replication owns independent Philox streams keyed by
``(seed, replication, stream)``, so a replication's randomness never depends
on which worker ran it or on what else was simulated.
"""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["MEANS_STREAM", "REWARDS_STREAM", "stream", "policy_stream_id"]

MEANS_STREAM = 0
REWARDS_STREAM = 1


def policy_stream_id(name: str) -> int:
    """Stream key of a policy's private randomness (tie-breaking, sampling)."""
    # offset keeps policy streams clear of the shared ones
    return 2 + zlib.crc32(name.encode("utf-8"))


def stream(seed: int, replication: int, stream_id: int) -> np.random.Generator:
    if seed < 0 or replication < 0 or stream_id < 0:
        raise ValueError("seed, replication and stream id must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replication), int(stream_id)))
    return np.random.Generator(np.random.Philox(ss))
