"""64-bit seed mixing shared by the samplers and the trial engine."""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def as_seed(seed: int) -> int:
    """Reduce any Python int (including negatives) to an unsigned 64-bit seed."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    return int(seed) & MASK64


def fmix64(z: int) -> int:
    """SplitMix64 output finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix(seed: int, stream: int) -> int:
    """Derive an independent child seed for ``stream`` from ``seed``.

    Child seeds depend only on the pair, never on the order in which
    streams are requested.
    """
    return fmix64(as_seed(seed) ^ ((stream * GOLDEN_GAMMA) & MASK64))


def mix_range(seed: int, start: int, stop: int) -> np.ndarray:
    """Vectorised ``mix(seed, i)`` for ``i in range(start, stop)`` as uint64."""
    with np.errstate(over="ignore"):
        i = np.arange(start, stop, dtype=np.uint64)
        z = np.uint64(as_seed(seed)) ^ (i * np.uint64(GOLDEN_GAMMA))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))
