import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gwbarrier.gw import GWPath, extinction_prob, gw_jump, simulate_gw
from gwbarrier.stats import chi2_two_sample_values


def test_path_shapes(rng):
    single = simulate_gw(4, 6, rng)
    assert isinstance(single, GWPath)
    assert single.populations.shape == (7,) and single.steps == 6 and len(single) == 7
    batch = simulate_gw(4, 6, rng, size=50)
    assert batch.populations.shape == (50, 7)
    assert np.all(batch.populations[:, 0] == 4)


def test_zero_is_absorbing(rng):
    pops = simulate_gw(2, 30, rng, size=5000).populations
    dead = pops[:, :-1] == 0
    assert np.all(pops[:, 1:][dead] == 0)
    assert np.all(simulate_gw(0, 5, rng).populations == 0)


def test_martingale_and_variance(rng):
    n, steps, reps = 9, 12, 200_000
    pops = simulate_gw(n, steps, rng, size=reps).populations
    means = pops.mean(axis=0)
    # offspring variance is 2, so Var T_l = 2 n l
    var = 2.0 * n * np.arange(steps + 1)
    se = np.sqrt(np.maximum(var, 1.0) / reps)
    assert np.all(np.abs(means - n) <= 4 * se)
    assert pops[:, -1].var() == pytest.approx(var[-1], rel=0.05)


@pytest.mark.parametrize("n,l", [(1, 1), (3, 4), (10, 7), (25, 16)])
def test_jump_matches_stepwise(n, l, rng):
    jump = gw_jump(n, l, rng, size=40_000)
    walk = simulate_gw(n, l, rng, size=40_000).populations[:, -1]
    assert chi2_two_sample_values(jump, walk).p_value > 1e-4


def test_jump_zero_steps(rng):
    assert gw_jump(7, 0, rng) == 7
    assert np.all(gw_jump(np.array([0, 3]), 0, rng) == [0, 3])


@pytest.mark.parametrize("n,L", [(1, 1), (4, 4), (16, 16), (50, 32)])
def test_extinction_matches_simulation(n, L, rng):
    reps = 100_000
    dead = np.mean(gw_jump(n, L, rng, size=reps) == 0)
    p = float(extinction_prob(n, L))
    assert abs(dead - p) <= 4 * math.sqrt(p * (1 - p) / reps)


def test_extinction_closed_form():
    assert extinction_prob(1, 1) == pytest.approx(0.5)
    assert extinction_prob(0, 5) == 1.0
    assert extinction_prob(3, 2) == pytest.approx(8 / 27)


@given(st.integers(0, 200), st.integers(1, 200))
def test_extinction_monotone(n, L):
    p = extinction_prob(n, L)
    assert 0 < p <= 1
    assert extinction_prob(n + 1, L) <= p
    assert extinction_prob(n, L + 1) >= p


def test_domain_errors(rng):
    with pytest.raises(ValueError):
        extinction_prob(1, 0)
    with pytest.raises(ValueError):
        extinction_prob(-1, 3)
    with pytest.raises(ValueError):
        simulate_gw(-1, 3, rng)
    with pytest.raises(ValueError):
        simulate_gw(1, -1, rng)
    with pytest.raises(ValueError):
        gw_jump(1, -1, rng)
