"""Exact samplers for the elementary laws behind the GW / local-time identities.

All samplers take a :class:`numpy.random.Generator` (see :mod:`gwbarrier.rng`)
and broadcast over array parameters. With ``size=None`` and scalar
parameters they return a Python scalar.
"""

from dataclasses import dataclass
import math

import numpy as np
from numba import njit
from scipy.special import gammaln

from .special import bessel_i1_scaled


def _size_shape(size):
    if size is None:
        return ()
    if isinstance(size, (int, np.integer)):
        return (int(size),)
    return tuple(size)


def _finish(out, scalar):
    if scalar:
        return out.item()
    return out


def sample_offspring_sum(n, rng, size=None):
    """Total offspring of ``n`` individuals with P(k) = 2^-(k+1), k >= 0.

    This is one transition of the critical geometric Galton-Watson chain, a
    negative binomial count of failures before ``n`` successes at p = 1/2.
    """
    n_arr = np.asarray(n)
    if np.any(n_arr < 0):
        raise ValueError("population must be non-negative")
    scalar = size is None and n_arr.ndim == 0
    shape = np.broadcast_shapes(n_arr.shape, _size_shape(size))
    n_b = np.broadcast_to(n_arr, shape).astype(np.int64)
    out = np.zeros(shape, dtype=np.int64)
    live = n_b > 0
    if np.any(live):
        out[live] = rng.negative_binomial(n_b[live], 0.5)
    return _finish(out, scalar)


def sample_poisson(mean, rng, size=None):
    mean = np.asarray(mean, dtype=float)
    if np.any(~np.isfinite(mean)) or np.any(mean < 0):
        raise ValueError("Poisson mean must be finite and non-negative")
    out = rng.poisson(mean, size=size)
    return out if np.ndim(out) else int(out)


def sample_gamma(shape, scale, rng, size=None):
    shape = np.asarray(shape, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(scale > 0)):
        raise ValueError("Gamma shape and scale must be positive")
    out = rng.gamma(shape, scale, size=size)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# Bessel(nu = -1) law on {1, 2, ...}: P(m) = z^{2m} / ((m-1)! m!) / (z I_1(2z))


def bessel_nu_minus1_log_pmf(m, z):
    """Log pmf of the Bessel(-1, z) law; ``m >= 1``, ``z > 0``."""
    z = np.asarray(z, dtype=float)
    m = np.asarray(m)
    if np.any(~np.isfinite(z)) or np.any(z <= 0):
        raise ValueError("Bessel(-1) parameter must be positive and finite")
    log_norm = np.log(z) + np.log(bessel_i1_scaled(2.0 * z)) + 2.0 * z
    out = 2.0 * m * np.log(z) - gammaln(m) - gammaln(m + 1.0) - log_norm
    return np.where(m >= 1, out, -np.inf)


def bessel_nu_minus1_pmf(m, z):
    return np.exp(bessel_nu_minus1_log_pmf(m, z))


def bessel_nu_minus1_mode(z):
    # P(m+1)/P(m) = z^2 / (m(m+1)) >= 1 iff m(m+1) <= z^2
    z = np.asarray(z, dtype=float)
    r = np.floor((-1.0 + np.sqrt(1.0 + 4.0 * z * z)) / 2.0)
    return (r + 1.0).astype(np.int64)


@njit(cache=True)
def _bessel_scan(z, u, start, p_start):
    n = z.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        zz = z[i] * z[i]
        target = u[i]
        cum = p_start[i]
        m = start[i]
        result = m
        lo = m - 1
        p_lo = p_start[i] * lo * (lo + 1) / zz if lo >= 1 else 0.0
        hi = m + 1
        p_hi = p_start[i] * zz / (m * (m + 1.0))
        while cum <= target:
            if p_lo <= 0.0 and p_hi <= 0.0:
                break
            # visit support in decreasing-probability order (unimodal law)
            if p_lo > p_hi:
                cum += p_lo
                result = lo
                lo -= 1
                p_lo = p_lo * lo * (lo + 1) / zz if lo >= 1 else 0.0
            else:
                cum += p_hi
                result = hi
                p_hi = p_hi * zz / (hi * (hi + 1.0))
                hi += 1
        out[i] = result
    return out


def sample_bessel_nu_minus1(z, rng, size=None):
    """Draw from the Bessel(nu=-1, z) law by inversion of a single uniform.

    For ``z <= 2`` the scan starts at m = 1 and walks up; above that it starts
    at the mode and extends to whichever neighbour is more likely, which costs
    O(1 + sqrt(z)) on average.
    """
    z_arr = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z_arr)) or np.any(z_arr <= 0):
        raise ValueError("Bessel(-1) parameter must be positive and finite")
    scalar = size is None and z_arr.ndim == 0
    shape = z_arr.shape if size is None else np.broadcast_shapes(
        z_arr.shape, _size_shape(size))
    zb = np.ascontiguousarray(np.broadcast_to(z_arr, shape).ravel())
    u = rng.random(zb.shape[0])
    start = np.where(zb <= 2.0, 1, bessel_nu_minus1_mode(zb)).astype(np.int64)
    p_start = bessel_nu_minus1_pmf(start, zb)
    out = _bessel_scan(zb, u, start, p_start).reshape(shape)
    return _finish(out, scalar)


# ---------------------------------------------------------------------------
# BESQ^0 one-step kernel


@dataclass(frozen=True)
class Besq0Kernel:
    """Transition law of a 0-dimensional squared Bessel process over ``time``.

    The law has an atom ``exp(-start / (2 time))`` at 0 and an absolutely
    continuous part given by :func:`besq0_density`.
    """

    start: float
    time: float

    def __post_init__(self):
        if not (self.start >= 0 and math.isfinite(self.start)):
            raise ValueError("start must be finite and non-negative")
        if not (self.time > 0 and math.isfinite(self.time)):
            raise ValueError("time must be positive")

    @property
    def atom_probability(self) -> float:
        return math.exp(-self.start / (2.0 * self.time))

    def density(self, y):
        return besq0_density(self, y)


def besq0_density(kernel: Besq0Kernel, y):
    """Absolutely continuous part of the BESQ^0 kernel at ``y > 0``.

    ``(1/2t) sqrt(x/y) I_1(sqrt(xy)/t) exp(-(x+y)/2t)``, evaluated through the
    scaled I_1 so the exponent collapses to ``-(sqrt x - sqrt y)^2 / 2t``.
    """
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise ValueError("density is only defined for y > 0; the atom is separate")
    x, t = kernel.start, kernel.time
    if x == 0:
        out = np.zeros_like(y)
    else:
        s = np.sqrt(x * y) / t
        log_gauss = -((math.sqrt(x) - np.sqrt(y)) ** 2) / (2.0 * t)
        out = np.sqrt(x / y) / (2.0 * t) * bessel_i1_scaled(s) * np.exp(log_gauss)
    return float(out) if out.ndim == 0 else out


def besq0_step(x, t, rng, size=None):
    """Exact BESQ^0 transition from ``x`` over time ``t``.

    N ~ Poisson(x / 2t); the result is 0 if N = 0, else Gamma(N, scale 2t).
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x_arr)) or np.any(x_arr < 0):
        raise ValueError("start must be finite and non-negative")
    if not (t > 0 and math.isfinite(t)):
        raise ValueError("time must be positive")
    scalar = size is None and x_arr.ndim == 0
    shape = x_arr.shape if size is None else np.broadcast_shapes(
        x_arr.shape, _size_shape(size))
    counts = rng.poisson(np.broadcast_to(x_arr / (2.0 * t), shape))
    counts = np.asarray(counts)
    out = np.zeros(shape, dtype=float)
    live = counts > 0
    if np.any(live):
        out[live] = rng.gamma(counts[live], 2.0 * t)
    return _finish(out, scalar)
