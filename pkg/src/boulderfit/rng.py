"""Counter-based random streams.

Every random draw in this package comes from a Philox generator keyed by
(seed, stream, entity index). Keying per entity means that growing a matrix
by one row, or adding one more cell, never perturbs the draws of the
entities that were already there, which keeps regression tests stable.
"""

import numpy as np

# Stream tags. Keep these distinct across the whole package.
STREAM_PMF_U = 1
STREAM_PMF_V = 2
STREAM_PMF_BATCH = 3
STREAM_TRUE_U = 11
STREAM_TRUE_V = 12
STREAM_PROBLEM_ATTRS = 13
STREAM_CELL = 14

_INDEX_BITS = 48


def entity_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Generator for one (stream, entity) pair under a run-level seed."""
    if index < 0 or index >= (1 << _INDEX_BITS):
        raise ValueError(f"entity index {index} out of range")
    key = np.array(
        [seed % (1 << 64), (stream << _INDEX_BITS) + index],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
