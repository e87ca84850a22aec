"""Deterministic per-replicate random streams.

Every replicate ``i`` of a run with master seed ``s`` owns its own generator,
seeded with ``replicate_seed(s, i)``.  The seed derivation is the SplitMix64
output function applied to ``s + (i + 1) * GOLDEN`` modulo 2**64; it is a
64-bit avalanche mix, so nearby masters and indices give unrelated streams.
The generator itself is xoshiro256**, its 256-bit state filled from four
consecutive SplitMix64 outputs.

Results therefore depend only on ``(master seed, replicate index)`` and never
on how replicates are scheduled across threads.
"""
from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S17 = np.uint64(17)
_S45 = np.uint64(45)
_S7 = np.uint64(7)
_U5 = np.uint64(5)
_U9 = np.uint64(9)
_INV53 = 1.0 / 9007199254740992.0


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python int (result in [0, 2**64))."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def replicate_seed(master: int, index: int) -> int:
    return mix64((master + (index + 1) * GOLDEN) & MASK64)


def replicate_seeds(master: int, start: int, stop: int) -> np.ndarray:
    """Seeds for replicates ``start..stop-1`` as a uint64 array."""
    return np.array([replicate_seed(master, i) for i in range(start, stop)], dtype=np.uint64)


@njit(cache=True, inline="always")
def mix64_u(z):
    z = (z ^ (z >> _S30)) * _U_M1
    z = (z ^ (z >> _S27)) * _U_M2
    return z ^ (z >> _S31)


@njit(cache=True)
def seed_state(seed, state):
    """Fill a length-4 uint64 ``state`` from a 64-bit seed."""
    x = np.uint64(seed)
    for k in range(4):
        x = x + _U_GOLDEN
        state[k] = mix64_u(x)


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << k) | (x >> (np.uint64(64) - k))


@njit(cache=True)
def next_u64(s):
    result = _rotl(s[1] * _U5, _S7) * _U9
    t = s[1] << _S17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], _S45)
    return result


@njit(cache=True)
def uniform(s):
    """Uniform double in [0, 1) with 53 random bits."""
    return float(next_u64(s) >> _S11) * _INV53


@njit(cache=True)
def exponential(s, rate):
    # inverse CDF; 1 - u lies in (0, 1] so the log is finite
    return -np.log1p(-uniform(s)) / rate


@njit(cache=True)
def randbelow(s, n):
    k = int(uniform(s) * n)
    return k if k < n else n - 1
