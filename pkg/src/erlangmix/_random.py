"""Block-partitioned random streams.

Sample ``i`` always comes from block ``i // block_size``, and block ``b`` is
drawn from its own ``SeedSequence(seed, spawn_key=(b,))``. Results therefore
do not depend on how blocks are distributed over workers, and a prefix of a
longer draw equals a shorter draw with the same seed.
"""

from __future__ import annotations

import numpy as np

BLOCK_SIZE = 8192


def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block))))


def iter_blocks(seed: int, total: int, block_size: int = BLOCK_SIZE, stream: int = 0):
    """Yield ``(rng, count)`` pairs covering ``total`` samples in order.

    Callers draw a full ``block_size`` from each generator and keep the first
    ``count`` values; that is what makes prefixes stable.
    """
    done = 0
    block = 0
    while done < total:
        count = min(block_size, total - done)
        yield block_rng(seed, block, stream), count
        done += count
        block += 1
