"""Seed expansion for reproducible index builds.

A single 64-bit seed is expanded with splitmix64 into one child seed per hash table,
each feeding its own numpy PCG64 generator. Nothing reads global random state.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (next_state, output)."""
    state = (state + _GOLDEN_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def expand_seed(seed: int, count: int) -> list[int]:
    state = seed & _MASK64
    seeds = []
    for _ in range(count):
        state, value = splitmix64(state)
        seeds.append(value)
    return seeds


def table_generators(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(child)) for child in expand_seed(seed, count)]


def mix64(values: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer applied elementwise to a uint64 array."""
    z = np.asarray(values, dtype=np.uint64).copy()
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def combine_hashes(codes: np.ndarray) -> np.ndarray:
    """Fold rows of int64 hash codes, shape (n, k), into one 64-bit bucket key per row."""
    codes = np.atleast_2d(np.asarray(codes, dtype=np.int64))
    keys = np.full(codes.shape[0], _GOLDEN_GAMMA, dtype=np.uint64)
    for column in codes.T:
        keys = mix64(keys ^ column.astype(np.uint64))
    return keys
