"""Seeded random streams.

Every consumer derives its generator from ``(seed, index)`` so that concurrent
trajectories or trials draw the same numbers regardless of scheduling.
"""
import numpy as np


def stream(seed, *index):
    """Independent counter-based generator for the given ``index`` path.

    .. code-block:: python

        rng = stream(7, 3)      # trajectory 3 of run seeded with 7
        rng = stream(7, 3, 1)   # sub-stream 1 of trajectory 3
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(sequence))


def master(seed):
    """Generator for draws that are not split per trajectory."""
    return stream(seed)


def derive_seed(seed, *index):
    """A 32 bits integer seed derived from ``(seed, index)``, stable across platforms."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])
