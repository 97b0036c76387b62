"""Seed-substream helpers.

One user-facing seed fans out into fixed, documented lanes so that, e.g.,
drawing more events never perturbs the initial matrix generated from the
same seed. All generators are numpy PCG64.
"""

import numpy as np

# Substream tags (fixed forever; reordering them would silently change runs).
INIT = 0
EVENTS = 1
STRUCTURAL = 2
MIXED = 3
PANEL = 4
PORTFOLIO = 5


def substream(seed: int, tag: int) -> np.random.Generator:
    """Return the PCG64 generator for (seed, tag)."""
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return np.random.default_rng([seed, int(tag)])
