"""Counter-based random streams.

Every stream is a numpy ``Philox`` generator keyed by ``SeedSequence(seed,
spawn_key=(epoch, index))``: one independent stream per molecule per epoch, so
data can be perturbed in any order or in parallel and still reproduce.
"""

from typing import Optional, Tuple

import numpy as np

SHUFFLE_INDEX = 2**32 - 1


def stream(seed: int, epoch: int = 0, index: int = 0) -> np.random.Generator:
    """Stream for molecule ``index`` in ``epoch`` of a run seeded with ``seed``."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(epoch), int(index)))
    return np.random.Generator(np.random.Philox(sequence))


def shuffle_stream(seed: int, epoch: int) -> np.random.Generator:
    """Stream reserved for the batch order of one epoch."""
    return stream(seed, epoch, SHUFFLE_INDEX)


def stream_key(rng: np.random.Generator) -> Optional[Tuple[int, int, int]]:
    """``(seed, epoch, index)`` of a generator made by ``stream``, else None."""
    sequence = rng.bit_generator.seed_seq
    if not isinstance(sequence, np.random.SeedSequence) or not isinstance(sequence.entropy, int):
        return None
    if len(sequence.spawn_key) != 2:
        return None
    epoch, index = sequence.spawn_key
    return int(sequence.entropy), int(epoch), int(index)
