"""Critical Galton-Watson process with geometric offspring P(k) = 2^-(k+1)."""

from dataclasses import dataclass

import numpy as np

from .sampler import sample_offspring_sum

# populations live in int64; anything near this is outside desk scale
_POPULATION_LIMIT = 1 << 62


@dataclass
class GWPath:
    """Populations T_0..T_L; a batch of paths has shape (replicas, L + 1)."""

    populations: np.ndarray

    @property
    def steps(self) -> int:
        return self.populations.shape[-1] - 1

    def __len__(self):
        return self.populations.shape[-1]

    def extinct_at(self, l: int):
        return self.populations[..., l] == 0


def _check_overflow(t):
    if np.any(t >= _POPULATION_LIMIT):
        raise OverflowError("population exceeded the int64 safety limit")


def simulate_gw(n, steps, rng, size=None) -> GWPath:
    """Simulate ``steps`` generations from T_0 = ``n``.

    With ``size`` given, returns a batch of independent paths of shape
    ``(size, steps + 1)``.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if np.any(np.asarray(n) < 0):
        raise ValueError("initial population must be non-negative")
    shape = () if size is None else (int(size),)
    pops = np.zeros(shape + (steps + 1,), dtype=np.int64)
    current = np.broadcast_to(np.asarray(n, dtype=np.int64), shape).copy()
    pops[..., 0] = current
    for l in range(1, steps + 1):
        current = np.asarray(sample_offspring_sum(current, rng), dtype=np.int64)
        _check_overflow(current)
        pops[..., l] = current
    return GWPath(pops)


def gw_jump(n, l, rng, size=None):
    """Draw T_l given T_0 = ``n`` in one shot.

    Each of the ``n`` initial lines survives to generation ``l`` with
    probability 1/(l+1), and a surviving line has a Geometric(1/(l+1)) number
    of descendants on {1, 2, ...}. This is the exact l-step transition.
    """
    n_arr = np.asarray(n)
    if np.any(n_arr < 0) or l < 0:
        raise ValueError("n and l must be non-negative")
    scalar = size is None and n_arr.ndim == 0
    shape = n_arr.shape if size is None else np.broadcast_shapes(n_arr.shape, (int(size),))
    n_b = np.broadcast_to(n_arr.astype(np.int64), shape)
    if l == 0:
        out = n_b.copy()
        return out.item() if scalar else out
    p = 1.0 / (l + 1)
    survivors = rng.binomial(n_b, p)
    out = np.asarray(survivors, dtype=np.int64).copy()
    live = out > 0
    if np.any(live):
        out[live] += rng.negative_binomial(out[live], p)
    _check_overflow(out)
    return out.item() if scalar else out


def extinction_prob(n, L):
    """Exact P_n(T_L = 0) = (L / (L + 1))^n."""
    if np.any(np.asarray(L) < 1):
        raise ValueError("L must be at least 1")
    if np.any(np.asarray(n) < 0):
        raise ValueError("n must be non-negative")
    return (np.asarray(L, dtype=float) / (np.asarray(L, dtype=float) + 1.0)) ** np.asarray(n)
