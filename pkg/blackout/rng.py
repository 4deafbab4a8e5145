"""
Reproducible random streams

Every random draw in blackout comes from a ``numpy.random.Generator``. Streams
that must not depend on scheduling (e.g. one per block of generated samples)
are derived from the user seed with ``numpy.random.SeedSequence`` spawn keys.
"""


from typing import Optional

import numpy as np

# spawn key namespaces
TRAIN_STREAM = 0
GENERATE_STREAM = 1
INIT_STREAM = 2
VALIDATE_STREAM = 3


def substream(seed: Optional[int], *keys: int) -> np.random.Generator:
    """Return the independent stream identified by ``(seed, *keys)``.

    The same seed and keys always give the same stream, whatever order the
    streams are requested in.
    """
    seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))
