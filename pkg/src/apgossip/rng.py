"""Counter-based random streams for reproducible parallel simulation.

Every draw site is addressed by (seed, node, round, kind).  Streams are
built on Philox, a counter-based 64-bit generator, so any stream can be
reconstructed independently of creation order: node-local work can run
on a thread pool and still produce bitwise-identical results.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Draw kinds. Values are part of the reproducibility contract: changing
# them changes every sampled trajectory.
KIND_INIT = 0
KIND_POS = 1
KIND_INNER = 2
KIND_SGD = 3


def keyed_stream(seed: int, node: int, round_index: int, kind: int) -> np.random.Generator:
    """Return the generator for one (seed, node, round, kind) address."""
    if node < 0 or round_index < 0 or kind < 0:
        raise ValueError("stream address components must be nonnegative")
    lane = (kind << 56) | ((node & 0xFFFFFF) << 32) | (round_index & 0xFFFFFFFF)
    key = np.array([seed & _MASK64, lane], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class RngStreams:
    """Factory of per-(node, round, kind) generators for one experiment.

    With ``shared_nodes=True`` every node maps onto node 0's streams,
    which makes all nodes draw identical batches; this is used by the
    centralized-equivalence checks.
    """

    def __init__(self, seed: int, shared_nodes: bool = False):
        self.seed = int(seed)
        self.shared_nodes = bool(shared_nodes)

    def stream(self, node: int, round_index: int, kind: int) -> np.random.Generator:
        if self.shared_nodes:
            node = 0
        return keyed_stream(self.seed, node, round_index, kind)
