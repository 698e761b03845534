"""
Seed derivation.  Every random draw in the package comes from a
:class:`numpy.random.Generator` (PCG64) seeded through this module, so runs
are reproducible from a single integer.
"""

from __future__ import annotations

import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """
    Derive an independent 64-bit seed from a base seed and a key path.

    ``derive_seed(s, t)`` gives the per-iteration seed for iteration ``t``;
    additional keys split that stream further (e.g. split vs. training).
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])
    return int(ss.generate_state(1, np.uint64)[0])


def rng(seed: int) -> np.random.Generator:
    "Construct the package's standard generator for a seed."
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)))
