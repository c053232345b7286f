"""Seeded random streams.

Every random draw in the package comes from numpy's ``PCG64`` bit generator
seeded through ``SeedSequence([seed, *stream])``. PCG64 output is specified
bit-for-bit by numpy and is identical across platforms, so a 64-bit seed plus
the stream tags fully determines every sample.
"""

import numpy as np

# stream tags, kept distinct so that independent consumers never share draws
DOWNSAMPLE = 1
NOISE = 2
UV_RANDOM = 3
SURFACE = 4
LLOYD_INIT = 5
INIT_WEIGHTS = 6
TRAIN_UV = 7
TRAIN_ORDER = 8
FIXTURES = 9


def make_rng(seed, *stream):
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def derive_seed(seed, *stream):
    """A child 64-bit seed, e.g. one per dataset sample."""
    return int(np.random.SeedSequence([int(seed), *map(int, stream)]).generate_state(1, np.uint64)[0])
