"""SplitMix64 streams used for every random draw in the package.

A stream seeded with ``s`` produces, at step ``k = 0, 1, ...``, the 64-bit
word ``mix(s + (k + 1) * GAMMA)`` where ``mix`` is the SplitMix64 finaliser
(Steele, Lea & Flood 2014).  Uniform doubles are the top 53 bits scaled by
``2**-53``.  The generator is counter based, so sample ``i`` of a batch can
be generated independently of every other sample; its seed is
``split(seed, i) = mix(seed + (i + 1) * GAMMA2)``.

These definitions are frozen: golden tests depend on them.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
# second odd constant so split seeds do not coincide with stream outputs
GAMMA2 = 0xD1B54A32D192ED03

_U = np.uint64


def mix64(z):
    """SplitMix64 finaliser on Python ints or uint64 arrays."""
    if isinstance(z, (int, np.integer)) and not isinstance(z, np.ndarray):
        z = int(z) & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)
    z = np.asarray(z, dtype=_U)
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def split_seed(seed: int, index):
    """Seed of sub-stream ``index``; ``index`` may be an int or an integer array."""
    seed = int(seed) & MASK64
    if np.ndim(index) == 0:
        return mix64((seed + (int(index) + 1) * GAMMA2) & MASK64)
    idx = np.asarray(index, dtype=_U)
    return mix64(_U(seed) + (idx + _U(1)) * _U(GAMMA2))


def uniforms(seeds, step: int):
    """Uniform doubles in [0, 1) at position ``step`` of the streams ``seeds``."""
    s = np.asarray(seeds, dtype=_U)
    word = mix64(s + _U(((step + 1) * GAMMA) & MASK64))
    return (word >> _U(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def choose(seeds, step: int, cumulative_weights: np.ndarray) -> np.ndarray:
    """Atom indices drawn at ``step`` given the cumulative weight vector."""
    u = uniforms(seeds, step)
    idx = np.searchsorted(cumulative_weights, u, side="right")
    return np.minimum(idx, len(cumulative_weights) - 1)


def stream_uniforms(seed: int, count: int) -> np.ndarray:
    """First ``count`` uniforms of a single stream."""
    seeds = np.full(1, int(seed) & MASK64, dtype=_U)
    return np.array([uniforms(seeds, k)[0] for k in range(count)])
