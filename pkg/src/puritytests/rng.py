"""The single random stream used across the package.

Everything random goes through numpy's PCG64 bit generator (O'Neill 2014,
the ``PCG64`` / XSL-RR 128/64 variant) seeded through ``SeedSequence``.
Child streams are keyed by integer tuples so that replication ``i`` of a
study always sees the same numbers, however the work is scheduled.
"""
from __future__ import annotations

import numpy as np

ALGORITHM = "numpy.random.PCG64 (XSL-RR 128/64) via SeedSequence"


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    key = [int(seed), *(int(s) for s in stream)]
    if any(k < 0 for k in key):
        raise ValueError(f"seeds must be non-negative integers, got {key}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
