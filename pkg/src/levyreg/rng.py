"""Reproducible random streams for parallel Monte Carlo replication.

Each replica owns an RngStream identified by (seed, stream_id). Streams are
backed by the counter-based Philox generator keyed directly by the pair, so
the draw sequence of a stream depends only on its identity — never on
evaluation order, thread count, or how replicas are batched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Identity of one reproducible draw sequence."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, tag: int) -> "RngStream":
        """Derived stream for a distinct purpose (resampling draws etc.).

        Tags partition the stream_id space well above any replica index.
        """
        return RngStream(self.seed, (self.stream_id + (tag << 48)) & _MASK64)
