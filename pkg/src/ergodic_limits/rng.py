"""Reproducible random number streams.

Monte Carlo routines draw from counter-based streams keyed by
``(seed, purpose, sample_index)`` so that results are bit-identical no
matter how samples are partitioned across threads.  At the numpy level
the streams are Philox generators; inside compiled kernels a splitmix64
counter stream is used (one 64-bit mix per variate, no mutable state
shared between samples).
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Stream purpose tags.  Distinct tags guarantee that different parts of a
# run never reuse a stream even when they share the seed.
BIRKHOFF = 1
GREEN_KUBO = 2
TOWER = 3
FAST_SLOW = 4
SDE = 5
CENTERING = 6
PROJECTION = 7

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    """Vectorised splitmix64 finaliser on uint64 arrays."""
    z = (z + _GOLDEN) & _U64
    z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _U64
    z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _U64
    return z ^ (z >> np.uint64(31))


def sample_keys(seed: int, purpose: int, n_samples: int) -> np.ndarray:
    """Per-sample 64-bit stream keys, a pure function of the arguments."""
    base = _mix64_np(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    base = _mix64_np(base ^ np.uint64(purpose))
    idx = np.arange(n_samples, dtype=np.uint64)
    return _mix64_np(base ^ _mix64_np(idx))


def stream_key(seed: int, purpose: int, index: int = 0) -> int:
    return int(sample_keys(seed, purpose, index + 1)[index])


def philox(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """A Philox generator keyed by (seed, purpose, index)."""
    key = stream_key(seed, purpose, index)
    return np.random.Generator(np.random.Philox(key=[key, purpose]))


@njit(cache=True, inline="always")
def mix64(z):
    z = (z + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


@njit(cache=True, inline="always")
def u01(key, counter):
    """Uniform variate in (0, 1) from stream ``key`` at position ``counter``."""
    bits = mix64((key + counter * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
    # 53 significant bits; offset keeps the value strictly inside (0, 1).
    return ((bits >> 11) + 0.5) * (1.0 / 9007199254740992.0)
