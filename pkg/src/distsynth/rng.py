"""Seeded random streams.

All randomness goes through Philox4x64-10 (``numpy.random.Philox``), a
counter-based generator, keyed by ``numpy.random.SeedSequence`` over the user
seed and integer coordinates such as ``(draw, unit, period)``. A stream depends
only on its coordinates, so results do not depend on the order or thread in
which cells are processed.
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "Philox4x64-10 keyed by SeedSequence(seed, *coordinates)"

SIMULATION = 1
BOOTSTRAP = 2

_MASK64 = (1 << 64) - 1


def stream(seed: int, *coords: int) -> np.random.Generator:
    entropy = [int(seed) & _MASK64] + [int(c) for c in coords]
    if any(c < 0 for c in entropy):
        raise ValueError("stream coordinates must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
