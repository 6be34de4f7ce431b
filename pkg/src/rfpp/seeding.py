"""Counter-based seed derivation: child seeds depend only on (base seed, keys)."""

import numpy as np


def derive_seed(base_seed: int, *keys: int) -> int:
    """64-bit seed for the stream identified by ``keys`` under ``base_seed``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def replicate_seeds(base_seed: int, n: int, stream: int = 0) -> list[int]:
    return [derive_seed(base_seed, stream, i) for i in range(n)]
