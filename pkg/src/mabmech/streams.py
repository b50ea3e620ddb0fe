"""Independent, reproducible random streams keyed by (seed, trial, purpose).

Environment clicks, rule randomness and the rescaling draws of the
transformation each get their own Philox stream so that changing how one of
them is consumed never shifts the others.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {"env": 0, "rule": 1, "rescale": 2, "aux": 3}


def stream(seed: int, trial: int = 0, purpose: str = "aux") -> np.random.Generator:
    try:
        tag = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown stream purpose {purpose!r}; known: {sorted(PURPOSES)}") from None
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(trial), tag))
    return np.random.Generator(np.random.Philox(ss))
