"""Reproducible counter-based random-number streams.

Every replica (simulation copy, particle-system run, ensemble member) owns one
stream, keyed by (master_seed, stream_id) through Philox's 128-bit key.  The
key schedule is the mixing function: distinct keys give statistically
independent streams, identical keys reproduce bit-identical draws, and stream
creation is O(1), so replica-level parallelism cannot change results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Address of one independent random stream."""

    master_seed: int
    stream_id: int = 0

    def bit_generator(self) -> np.random.Philox:
        key = np.array(
            [self.master_seed & _MASK64, self.stream_id & _MASK64],
            dtype=np.uint64,
        )
        return np.random.Philox(key=key)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(self.bit_generator())

    def child(self, offset: int) -> "RngStream":
        """Derived stream for a sub-task; offset must be unique per use site."""
        return RngStream(self.master_seed, (self.stream_id + offset) & _MASK64)


def substream_base(kind: int) -> int:
    """Disjoint stream_id blocks for the independent sides of an experiment
    (e.g. forward ensemble vs dual ensemble).  2^32 replicas per block."""
    return kind << 32
