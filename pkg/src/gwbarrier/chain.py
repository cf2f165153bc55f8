"""Interleaved local-time / traversal-count chain on the half-line.

The chain alternates ``(L_0, T_0, L_1, T_1, ...)``: given the local time
``L_k = v`` the next traversal count is Poisson(v), and given ``T_k = m >= 1``
the next local time is Gamma(m, scale 1) (0 when ``m = 0``). Two conditional
decompositions are provided as well: the local time between two traversal
counts, and the traversal count between two local times.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigError
from .sampler import besq0_step, sample_bessel_nu_minus1
from .stats import DEFAULT_ALPHA, TestReport, ks_two_sample, two_proportion_z

MIN_CHECK_REPLICAS = 1000


@dataclass
class InterleavedPath:
    """``local_times`` has length depth + 1, ``traversals`` length depth.

    Batches carry a leading replica axis.
    """

    local_times: np.ndarray
    traversals: np.ndarray
    initial_local_time: float

    @property
    def depth(self) -> int:
        return self.traversals.shape[-1]

    def interleaved(self):
        """Return ``(L_0, T_0, L_1, T_1, ..., L_depth)`` along the last axis."""
        shape = self.local_times.shape[:-1] + (2 * self.depth + 1,)
        out = np.empty(shape, dtype=float)
        out[..., 0::2] = self.local_times
        out[..., 1::2] = self.traversals
        return out


def simulate_chain(u, depth, rng, size=None) -> InterleavedPath:
    """Forward simulation of the chain from ``L_0 = u``."""
    if not (u > 0 and math.isfinite(u)):
        raise ValueError("initial local time must be positive")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    shape = () if size is None else (int(size),)
    local = np.zeros(shape + (depth + 1,), dtype=float)
    trav = np.zeros(shape + (depth,), dtype=np.int64)
    local[..., 0] = u
    current = np.full(shape, float(u))
    for k in range(depth):
        counts = np.asarray(rng.poisson(current), dtype=np.int64)
        trav[..., k] = counts
        nxt = np.zeros(shape, dtype=float)
        live = counts > 0
        if np.any(live):
            nxt[live] = rng.gamma(counts[live], 1.0)
        local[..., k + 1] = nxt
        current = nxt
    return InterleavedPath(local, trav, float(u))


def cond_local_time(m_prev, m_next, rng, size=None):
    """Local time between traversal counts ``m_prev`` and ``m_next``.

    Gamma(m_prev + m_next, scale 1/2), or 0 when both counts are 0.
    """
    m_prev, m_next = np.asarray(m_prev), np.asarray(m_next)
    if np.any(m_prev < 0) or np.any(m_next < 0):
        raise ValueError("counts must be non-negative")
    total = m_prev + m_next
    scalar = size is None and total.ndim == 0
    shape = total.shape if size is None else np.broadcast_shapes(total.shape, (int(size),))
    total = np.broadcast_to(total, shape)
    out = np.zeros(shape, dtype=float)
    live = total > 0
    if np.any(live):
        out[live] = rng.gamma(total[live], 0.5)
    return out.item() if scalar else out


def cond_traversal(u_l, u_next, rng, size=None):
    """Traversal count between local times ``u_l`` and ``u_next``.

    0 when ``u_next = 0``, else Bessel(-1) with parameter sqrt(u_l * u_next).
    """
    u_l = np.asarray(u_l, dtype=float)
    u_next = np.asarray(u_next, dtype=float)
    if np.any(~(u_l > 0)):
        raise ValueError("u_l must be positive")
    if np.any(u_next < 0):
        raise ValueError("u_next must be non-negative")
    scalar = size is None and u_l.ndim == 0 and u_next.ndim == 0
    shape = np.broadcast_shapes(u_l.shape, u_next.shape)
    if size is not None:
        shape = np.broadcast_shapes(shape, (int(size),))
    prod = np.broadcast_to(u_l * u_next, shape)
    out = np.zeros(shape, dtype=np.int64)
    live = prod > 0
    if np.any(live):
        out[live] = sample_bessel_nu_minus1(np.sqrt(prod[live]), rng)
    return out.item() if scalar else out


@dataclass(frozen=True)
class ChainCheckReport:
    """Chain marginal against the squared Bessel-0 marginal at one step count."""

    u: float
    steps: int
    ks: TestReport
    atom_chain: float
    atom_besq: float
    atom_exact: float
    atom_z: float             # (chain - besq) / combined SE
    alpha: float

    @property
    def passed(self) -> bool:
        return self.ks.p_value > self.alpha and abs(self.atom_z) <= 3.0

    def to_dict(self):
        return {"u": self.u, "steps": self.steps, "ks_statistic": self.ks.statistic,
                "ks_p_value": self.ks.p_value, "atom_chain": self.atom_chain,
                "atom_besq": self.atom_besq, "atom_exact": self.atom_exact,
                "atom_z": self.atom_z, "alpha": self.alpha, "passed": self.passed}


def besq_atom_probability(u, steps):
    """P(L_steps = 0) for the chain from u: the Bessel-0 atom exp(-u / steps)."""
    return math.exp(-u / steps)


def besq0_marginal_check(u, steps, replicas, rng, alpha=DEFAULT_ALPHA) -> ChainCheckReport:
    """Compare L_steps from the chain with half of BESQ^0 started at 2u.

    The positive parts go through a two-sample KS test and the atoms at 0 are
    compared through a two-proportion z statistic.
    """
    if not (u > 0):
        raise ValueError("u must be positive")
    if replicas < MIN_CHECK_REPLICAS:
        raise ConfigError(f"replicas={replicas} is underpowered; need >= {MIN_CHECK_REPLICAS}")
    chain = simulate_chain(u, steps, rng, size=replicas).local_times[:, -1]
    besq = np.full(replicas, 2.0 * u)
    for _ in range(steps):
        besq = besq0_step(besq, 1.0, rng)
    besq = besq / 2.0
    pos_a, pos_b = chain[chain > 0], besq[besq > 0]
    if pos_a.size and pos_b.size:
        ks = ks_two_sample(pos_a, pos_b, alpha)
    else:
        # u -> 0: both arms (almost) all at the atom
        ks = TestReport(0.0, 1.0, (pos_a.size, pos_b.size), alpha)
    za, zb = int(np.sum(chain == 0)), int(np.sum(besq == 0))
    diff, se = two_proportion_z(za, replicas, zb, replicas)
    atom_z = 0.0 if se == 0 else diff / se
    return ChainCheckReport(float(u), int(steps), ks, za / replicas, zb / replicas,
                            besq_atom_probability(u, steps), float(atom_z), alpha)
