import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from gwbarrier.sampler import (Besq0Kernel, besq0_density, besq0_step, bessel_nu_minus1_mode,
                               bessel_nu_minus1_pmf, sample_bessel_nu_minus1, sample_gamma,
                               sample_offspring_sum, sample_poisson)
from gwbarrier.special import bessel_i0_scaled, bessel_i1_scaled
from gwbarrier.stats import chi2_two_sample, ks_two_sample


def bessel_mean(z):
    return z * bessel_i0_scaled(2 * z) / bessel_i1_scaled(2 * z)


def test_offspring_zero_population(rng):
    assert sample_offspring_sum(0, rng) == 0
    assert np.all(sample_offspring_sum(np.zeros(10, dtype=int), rng) == 0)


def test_offspring_law_single_parent(rng):
    draws = sample_offspring_sum(1, rng, size=200_000)
    counts = np.bincount(draws, minlength=12)[:12]
    expected = 200_000 * 0.5 ** (np.arange(12) + 1)
    # chi-square against the exact geometric law (bins 0..11)
    stat = np.sum((counts - expected) ** 2 / expected)
    assert stat < 40.0


def test_offspring_mean_is_critical(rng):
    draws = sample_offspring_sum(7, rng, size=200_000)
    se = math.sqrt(draws.var() / draws.size)
    assert abs(draws.mean() - 7) < 4 * se


def test_sampler_domain_errors(rng):
    with pytest.raises(ValueError):
        sample_offspring_sum(-1, rng)
    with pytest.raises(ValueError):
        sample_poisson(-1.0, rng)
    with pytest.raises(ValueError):
        sample_gamma(0.0, 1.0, rng)
    with pytest.raises(ValueError):
        sample_bessel_nu_minus1(0.0, rng)
    with pytest.raises(ValueError):
        besq0_step(-1.0, 1.0, rng)
    with pytest.raises(ValueError):
        besq0_step(1.0, 0.0, rng)


@pytest.mark.parametrize("z", [1e-6, 0.5, 2.0, 5.0, 40.0])
def test_bessel_pmf_normalised(z):
    m = np.arange(1, 2000)
    assert bessel_nu_minus1_pmf(m, z).sum() == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.01, 300.0))
def test_bessel_mode_is_argmax(z):
    mode = int(bessel_nu_minus1_mode(z))
    p = bessel_nu_minus1_pmf(np.array([max(mode - 1, 1), mode, mode + 1]), z)
    assert p[1] >= p[0] and p[1] >= p[2]


@pytest.mark.parametrize("z", [1e-6, 0.5, 2.0, 4.0, 100.0])
def test_bessel_sampler_mean(z, rng):
    draws = sample_bessel_nu_minus1(z, rng, size=100_000)
    assert draws.min() >= 1
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - bessel_mean(z)) <= 3 * max(se, 1e-9)


@pytest.mark.parametrize("z", [0.8, 3.0, 12.0])
def test_bessel_sampler_law(z, rng):
    n = 100_000
    draws = sample_bessel_nu_minus1(z, rng, size=n)
    support = np.arange(1, draws.max() + 1)
    observed = np.bincount(draws, minlength=support[-1] + 1)[1:]
    expected = np.round(n * bessel_nu_minus1_pmf(support, z)).astype(int)
    expected[-1] += n - expected.sum()
    rep = chi2_two_sample(observed, expected)
    assert rep.p_value > 1e-4


def test_bessel_scalar_and_array_shapes(rng):
    assert isinstance(sample_bessel_nu_minus1(2.0, rng), int)
    assert sample_bessel_nu_minus1(np.array([1.0, 2.0]), rng).shape == (2,)


def test_besq_kernel_mass():
    for x, t in [(1.0, 1.0), (10.0, 1.0), (3.0, 0.25)]:
        k = Besq0Kernel(x, t)
        mass, _ = integrate.quad(lambda y: besq0_density(k, y), 0, np.inf, limit=400,
                                 epsabs=1e-13)
        assert k.atom_probability + mass == pytest.approx(1.0, abs=1e-9)


def test_besq_kernel_atom_uses_time():
    assert Besq0Kernel(4.0, 2.0).atom_probability == pytest.approx(math.exp(-1.0))
    assert Besq0Kernel(0.0, 1.0).atom_probability == 1.0


def test_besq_density_errors():
    with pytest.raises(ValueError):
        besq0_density(Besq0Kernel(1.0, 1.0), 0.0)
    with pytest.raises(ValueError):
        Besq0Kernel(-1.0, 1.0)


def test_besq_step_mean_and_atom(rng):
    n = 200_000
    y = besq0_step(9.0, 1.0, rng, size=n)
    # BESQ^0 is a martingale
    assert abs(y.mean() - 9.0) <= 3 * y.std() / math.sqrt(n)
    atom = math.exp(-4.5)
    assert abs(np.mean(y == 0) - atom) <= 3 * math.sqrt(atom * (1 - atom) / n)


def test_besq_step_continuous_part_matches_density(rng):
    k = Besq0Kernel(5.0, 1.5)
    y = besq0_step(k.start, k.time, rng, size=50_000)
    y = np.sort(y[y > 0])
    # empirical CDF of the continuous part vs quadrature of the density
    grid = np.quantile(y, [0.1, 0.3, 0.5, 0.7, 0.9])
    mass = 1 - k.atom_probability
    for g in grid:
        cdf, _ = integrate.quad(lambda v: besq0_density(k, v), 0, g, limit=200)
        emp = np.searchsorted(y, g, side="right") / y.size
        assert abs(cdf / mass - emp) < 0.01


def test_besq_time_scaling(rng):
    # BESQ^0 over time t from x equals t * BESQ^0 over time 1 from x / t
    a = besq0_step(6.0, 2.0, rng, size=20_000)
    b = 2.0 * besq0_step(3.0, 1.0, rng, size=20_000)
    assert ks_two_sample(a[a > 0], b[b > 0]).p_value > 1e-4
