import math

import numpy as np
import pytest
from scipy import special as sp
from scipy import stats as sps

from gwbarrier.chain import (InterleavedPath, besq0_marginal_check, besq_atom_probability,
                             cond_local_time, cond_traversal, simulate_chain)
from gwbarrier.errors import ConfigError
from gwbarrier.gw import simulate_gw
from gwbarrier.special import bessel_i0_scaled, bessel_i1_scaled
from gwbarrier.stats import chi2_two_sample, chi2_two_sample_values, ks_two_sample


def test_shapes_and_interleaving(rng):
    path = simulate_chain(2.0, 5, rng)
    assert isinstance(path, InterleavedPath)
    assert path.depth == 5 and path.local_times.shape == (6,)
    seq = path.interleaved()
    assert seq.shape == (11,)
    assert seq[0] == 2.0
    np.testing.assert_array_equal(seq[1::2], path.traversals)
    batch = simulate_chain(2.0, 5, rng, size=10)
    assert batch.interleaved().shape == (10, 11)


def test_absorption_at_zero(rng):
    path = simulate_chain(1.0, 20, rng, size=20_000)
    # T_k = 0 forces L_{k+1} = 0, and L_k = 0 forces T_k = 0
    assert np.all(path.local_times[:, 1:][path.traversals == 0] == 0)
    assert np.all(path.traversals[path.local_times[:, :-1] == 0] == 0)


def test_both_coordinates_are_martingales(rng):
    u, reps = 3.0, 200_000
    path = simulate_chain(u, 8, rng, size=reps)
    for col in list(path.local_times.T) + list(path.traversals.T):
        assert abs(col.mean() - u) <= 4 * col.std() / math.sqrt(reps)


def test_atom_formula():
    assert besq_atom_probability(4.0, 5) == pytest.approx(math.exp(-0.8))


@pytest.mark.parametrize("u,steps", [(0.5, 1), (2.0, 3), (4.0, 5)])
def test_atom_matches_simulation(u, steps, rng):
    reps = 100_000
    last = simulate_chain(u, steps, rng, size=reps).local_times[:, -1]
    p = besq_atom_probability(u, steps)
    assert abs(np.mean(last == 0) - p) <= 4 * math.sqrt(p * (1 - p) / reps)


@pytest.mark.parametrize("m_prev,m_next", [(1, 0), (1, 2), (3, 3)])
def test_local_time_bridge_by_rejection(m_prev, m_next, rng):
    path = simulate_chain(2.0, 2, rng, size=300_000)
    keep = (path.traversals[:, 0] == m_prev) & (path.traversals[:, 1] == m_next)
    observed = path.local_times[keep, 1]
    assert observed.size > 2000
    direct = cond_local_time(m_prev, m_next, rng, size=observed.size)
    assert ks_two_sample(observed, direct).p_value > 1e-4
    # and against the Gamma(m_prev + m_next, 1/2) cdf itself
    ref = sps.gamma(m_prev + m_next, scale=0.5)
    assert sps.kstest(observed, ref.cdf).pvalue > 1e-4


def test_local_time_bridge_zero_counts(rng):
    assert cond_local_time(0, 0, rng) == 0.0
    with pytest.raises(ValueError):
        cond_local_time(-1, 2, rng)


@pytest.mark.parametrize("u,w", [(0.3, 0.7), (2.0, 1.5), (6.0, 9.0)])
def test_traversal_bridge_law(u, w, rng):
    # P(T = m | L_k = u, L_{k+1} = w) is proportional to (u w)^m / (m! (m-1)!)
    n = 60_000
    draws = cond_traversal(u, w, rng, size=n)
    m = np.arange(1, 200)
    logw = m * math.log(u * w) - sp.gammaln(m + 1) - sp.gammaln(m)
    pmf = np.exp(logw - logw.max())
    pmf /= pmf.sum()
    observed = np.bincount(draws, minlength=200)[1:200]
    expected = np.round(n * pmf).astype(int)
    expected[np.argmax(expected)] += n - expected.sum()
    assert chi2_two_sample(observed, expected).p_value > 1e-4


def test_traversal_bridge_edge_cases(rng):
    assert cond_traversal(1.0, 0.0, rng) == 0
    with pytest.raises(ValueError):
        cond_traversal(0.0, 1.0, rng)
    with pytest.raises(ValueError):
        cond_traversal(1.0, -1.0, rng)


@pytest.mark.parametrize("u,steps", [(0.5, 2), (4.0, 5)])
def test_marginal_check_passes(u, steps, rng):
    report = besq0_marginal_check(u, steps, 20_000, rng)
    assert report.passed, report.to_dict()
    assert report.atom_exact == pytest.approx(math.exp(-u / steps))


def test_marginal_check_rejects_small_runs(rng):
    with pytest.raises(ConfigError):
        besq0_marginal_check(1.0, 2, 999, rng)


def test_simulate_errors(rng):
    with pytest.raises(ValueError):
        simulate_chain(0.0, 3, rng)
    with pytest.raises(ValueError):
        simulate_chain(1.0, 0, rng)


@pytest.mark.parametrize("m", [1, 3, 10])
def test_traversals_given_first_count_are_gw(m, rng):
    path = simulate_chain(float(m), 6, rng, size=200_000)
    keep = path.traversals[:, 0] == m
    chain_counts = path.traversals[keep, -1]
    gw = simulate_gw(m, 5, rng, size=chain_counts.size).populations[:, -1]
    assert chi2_two_sample_values(chain_counts, gw).p_value > 1e-3


def test_traversal_bridge_mean(rng):
    draws = cond_traversal(2.0, 8.0, rng, size=100_000)
    target = 4.0 * bessel_i0_scaled(8.0) / bessel_i1_scaled(8.0)
    assert abs(draws.mean() - target) <= 3 * draws.std() / math.sqrt(draws.size)


@pytest.mark.parametrize("m1,m2", [(1, 1), (8, 8), (50, 10)])
def test_local_time_bridge_lower_deviation(m1, m2, rng):
    # P(sqrt(2 L) >= sqrt(m1 + m2) - z) >= 1 - exp(-z^2) for 0 < z < sqrt(m1 + m2)
    n = 100_000
    r = np.sqrt(2.0 * cond_local_time(m1, m2, rng, size=n))
    top = math.sqrt(m1 + m2)
    for z in np.linspace(0.05, top, 25, endpoint=False):
        frac = np.mean(r >= top - z)
        assert frac + 3 * math.sqrt(frac * (1 - frac) / n) + 1e-12 >= 1 - math.exp(-z * z)


@pytest.mark.parametrize("x", [math.sqrt(2), 4.0, 12.0])
def test_one_step_tails_are_gaussian(x, rng):
    # the step x -> sqrt(2 * next) has tails below c exp(-c z^2) for one c > 0
    n = 400_000
    m = x * x / 2
    loc = np.sqrt(2.0 * rng.gamma(np.full(n, m), 1.0))           # from T = m
    cnt = np.sqrt(2.0 * rng.poisson(np.full(n, m)))              # from L = m
    for sample in (loc, cnt):
        z = np.linspace(0.5, 5.0, 10)
        tail = np.array([np.mean(np.abs(sample - x) >= zz) for zz in z])
        seen = tail > 0
        # a single envelope c exp(-c z^2) covers every resolved point
        c = np.min(-np.log(tail[seen]) / z[seen] ** 2)
        assert c > 0.05
        assert np.all(tail <= np.exp(-c * z ** 2) + 1e-12)
