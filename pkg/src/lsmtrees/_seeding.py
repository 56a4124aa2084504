"""Seed derivation shared by the simulators, forests and the experiment runner."""
from __future__ import annotations

import numpy as np


def derive_seed(root: int, *keys: int) -> int:
    """Return a 63-bit integer seed derived from ``root`` and a key path.

    Distinct key paths give statistically independent streams, so work can be
    split into blocks and scheduled in any order without changing results.
    """
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def generator(root: int, *keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator for the stream ``(root, *keys)``."""
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
