"""Seed plumbing: every random stream is derived from one integer seed."""
import numpy as np


def fresh_seed():
    """A new seed drawn from OS entropy, small enough to print and retype."""
    return int(np.random.SeedSequence().entropy % (2**63))


def as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def child_seeds(seed, k):
    """``k`` independent integer seeds derived from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> 1) for c in ss.spawn(k)]
