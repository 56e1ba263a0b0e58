"""Per-run random streams derived from a base seed and a seed index."""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x):
    """One step of the splitmix64 output function on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(base_seed, index):
    """Seed for run ``index``: splitmix64 applied to the base, then mixed with the index."""
    s = splitmix64(int(base_seed) & _MASK)
    return splitmix64((s + int(index) * 0x9E3779B97F4A7C15) & _MASK)


def run_rng(base_seed, index):
    return np.random.default_rng(derive_seed(base_seed, index))
