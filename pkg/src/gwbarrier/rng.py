"""Counter-based random streams keyed by (master_seed, stream_index).

Every stream is a :class:`numpy.random.Generator` over a Philox-4x64 counter
generator whose 128-bit key is the pair ``(master_seed, stream_index)``, 64
bits each. Distinct keys give independent sequences, and a stream's output is
a pure function of its key, so results never depend on which worker consumed
which stream.

Compiled walk kernels do not call back into the Generator for every step; they
draw a 256-bit xoshiro state from their stream once and advance that.
"""

import numpy as np
from numba import njit

_MASK64 = (1 << 64) - 1


def rng_stream(master_seed: int, stream_index: int) -> np.random.Generator:
    """Return the Generator for ``(master_seed, stream_index)``."""
    if master_seed < 0 or stream_index < 0:
        raise ValueError("seed and stream index must be non-negative")
    key = np.array([master_seed & _MASK64, stream_index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def xoshiro_state(rng: np.random.Generator) -> np.ndarray:
    """Draw a non-zero xoshiro256** state (4 x uint64) from ``rng``."""
    while True:
        state = rng.integers(0, np.iinfo(np.uint64).max, size=4, dtype=np.uint64,
                             endpoint=True)
        if np.any(state):
            return state


@njit(inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(inline="always")
def xoshiro_next(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(inline="always")
def xoshiro_below(s, n):
    """Uniform integer in [0, n) for 1 <= n < 2**32 (Lemire, exact)."""
    nn = np.uint64(n)
    threshold = np.uint64((4294967296 - n) % n)
    while True:
        r = xoshiro_next(s) >> np.uint64(32)
        m = r * nn
        if (m & np.uint64(0xFFFFFFFF)) >= threshold:
            return np.int64(m >> np.uint64(32))


@njit(inline="always")
def xoshiro_uniform(s):
    """Uniform double in [0, 1) with 53 random bits."""
    return (xoshiro_next(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
