"""Deterministic seed derivation: one root seed fans out to child streams."""

import numpy as np

__all__ = ["derived_seed"]


def derived_seed(root: int, *key: int) -> int:
    """Child seed for a named stream, e.g. derived_seed(root, replicate_index).

    Children with distinct keys are statistically independent, and the
    mapping is stable across runs and platforms.
    """
    return int(np.random.SeedSequence((int(root),) + tuple(int(k) for k in key)).generate_state(1)[0])
