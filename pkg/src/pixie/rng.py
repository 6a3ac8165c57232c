"""Counter-based SplitMix64 streams.

A stream is identified by a 64-bit starting state. Element ``i`` of the
stream is ``mix(state + (i + 1) * GOLDEN)``, which is exactly what the
sequential SplitMix64 generator would return on its ``i``-th call, so any
slice can be produced in one vectorised shot.
"""
import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK
    return h


def stream_state(seed: int, key: str) -> int:
    """Starting state for the stream keyed by ``(seed, key)``."""
    return (seed & _MASK) ^ fnv1a64(key)


def splitmix64(state: int, n: int) -> np.ndarray:
    """First ``n`` outputs of SplitMix64 started at ``state`` (uint64)."""
    counter = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = counter * np.uint64(GOLDEN) + np.uint64(state & _MASK)
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return z


def uniform01(state: int, n: int) -> np.ndarray:
    """Doubles in [0, 1): top 53 bits divided by 2**53."""
    return (splitmix64(state, n) >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def uniform(state: int, shape, bound: float) -> np.ndarray:
    n = int(np.prod(shape, dtype=np.int64))
    u = uniform01(state, n)
    return ((2.0 * u - 1.0) * bound).astype(np.float32).reshape(shape)


def signs(state: int, shape) -> np.ndarray:
    """Pseudo-random +-1 entries (float32); +1 when u < 0.5."""
    n = int(np.prod(shape, dtype=np.int64))
    u = uniform01(state, n)
    return np.where(u < 0.5, 1.0, -1.0).astype(np.float32).reshape(shape)
