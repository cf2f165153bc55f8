import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from gwbarrier.rng import rng_stream
from gwbarrier.stats import (SQRT_2LN2, bernoulli_estimate, bonferroni, chi2_independence,
                             chi2_two_sample, chi2_two_sample_values, fit_envelope,
                             ks_two_sample, mean_estimate, merge_sparse_bins, replicate,
                             replicate_blocks, sample_mean_estimate, within_se)


def test_wilson_zero_successes():
    est = bernoulli_estimate(0, 100, 0.99)
    z2 = sps.norm.ppf(0.995) ** 2
    assert est.point == 0.0 and est.ci_low == 0.0
    assert est.ci_high == pytest.approx(z2 / (100 + z2))


def test_wilson_matches_formula():
    est = bernoulli_estimate(30, 100, 0.95)
    z = sps.norm.ppf(0.975)
    n, p = 100, 0.3
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    assert est.ci_low == pytest.approx(centre - half)
    assert est.ci_high == pytest.approx(centre + half)
    assert type(est.ci_low) is float


@given(st.integers(1, 10_000), st.data())
def test_wilson_brackets_point(n, data):
    s = data.draw(st.integers(0, n))
    est = bernoulli_estimate(s, n)
    assert 0.0 <= est.ci_low <= est.point <= est.ci_high <= 1.0


def test_estimate_errors():
    with pytest.raises(ValueError):
        bernoulli_estimate(1, 0)
    with pytest.raises(ValueError):
        bernoulli_estimate(5, 4)
    with pytest.raises(ValueError):
        mean_estimate(1.0, 1.0, 1)


def test_mean_estimate_matches_numpy(rng):
    x = rng.normal(2.0, 3.0, size=5000)
    est = sample_mean_estimate(x)
    assert est.point == pytest.approx(x.mean())
    assert est.stderr == pytest.approx(x.std(ddof=1) / math.sqrt(x.size))
    assert type(est.point) is float
    assert within_se(est.point, 2.0, est.stderr, k=4)


def test_ks_identical_and_shifted(rng):
    a = rng.normal(size=5000)
    b = rng.normal(size=5000)
    assert ks_two_sample(a, b).p_value > 1e-3
    assert ks_two_sample(a, b + 0.2).p_value < 1e-6


def test_chi2_power(rng):
    a = rng.poisson(5.0, size=10_000)
    b = rng.poisson(5.5, size=10_000)
    assert not chi2_two_sample_values(a, b).passed


def test_chi2_calibration():
    # under the null the rejection rate at level 0.05 stays near 0.05
    rejects = 0
    trials = 300
    for i in range(trials):
        r = rng_stream(11, i)
        rep = chi2_two_sample_values(r.poisson(4.0, 2000), r.poisson(4.0, 3000), alpha=0.05)
        rejects += not rep.passed
    assert rejects / trials < 0.05 + 4 * math.sqrt(0.05 * 0.95 / trials)
    assert rejects > 0


def test_chi2_unequal_sizes_dof():
    a = np.array([50, 100, 50])
    b = 2 * a
    rep = chi2_two_sample(a, b)
    assert rep.statistic == pytest.approx(0.0, abs=1e-12)
    assert rep.dof == 2


@given(st.lists(st.integers(0, 40), min_size=2, max_size=30), st.data())
def test_merge_preserves_totals(ca, data):
    cb = data.draw(st.lists(st.integers(0, 40), min_size=len(ca), max_size=len(ca)))
    if sum(ca) == 0 or sum(cb) == 0:
        return
    ma, mb = merge_sparse_bins(ca, cb)
    assert ma.sum() == sum(ca) and mb.sum() == sum(cb)
    assert len(ma) <= len(ca)


def test_chi2_independence(rng):
    u = rng.poisson(3.0, size=20_000)
    assert chi2_independence(u, rng.poisson(3.0, size=20_000)).p_value > 1e-4
    assert chi2_independence(u, u + rng.poisson(1.0, size=20_000)).p_value < 1e-6


def test_bonferroni():
    assert bonferroni(0.01, 36) == pytest.approx(0.01 / 36)
    assert bonferroni(0.01, 0) == 0.01


def test_fit_x_exp_decay_exact():
    x = np.linspace(1.0, 10.0, 12)
    p = 2.0 * x * np.exp(-SQRT_2LN2 * x)
    fit = fit_envelope(x, p, "x_exp_decay")
    assert fit.constant == pytest.approx(2.0)
    assert fit.slope == pytest.approx(-SQRT_2LN2)
    assert fit.max_violation == pytest.approx(0.0, abs=1e-12)


def test_fit_exp_decay_exact():
    x = np.arange(0.0, 8.0)
    fit = fit_envelope(x, 3.0 * np.exp(-0.7 * x), "exp_decay")
    assert fit.rate == pytest.approx(0.7)
    assert fit.constant == pytest.approx(3.0)


def test_fit_ratio_constant():
    fit = fit_envelope([1, 2, 3], [0.2, 0.3, 0.1], "ratio_constant", kernel=[0.1, 0.1, 0.1])
    assert fit.constant == pytest.approx(3.0) and fit.lower_constant == pytest.approx(1.0)


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_envelope([1, 2], [0.1, 0.1], "exp_decay")
    with pytest.raises(ValueError):
        fit_envelope([1, 2, 3], [0, 0, 0], "exp_decay")
    with pytest.raises(ValueError):
        fit_envelope([1, 2, 3], [0.1, 0.1, 0.1], "ratio_constant")
    with pytest.raises(ValueError):
        fit_envelope([1, 2, 3], [0.1, 0.1, 0.1], "cubic")


def _coin(rng, n):
    return np.array([int(np.sum(rng.random(n) < 0.3)), n])


def test_replicate_worker_invariant():
    a = replicate(_coin, 50_000, 7, workers=1, block_size=4096)
    b = replicate(_coin, 50_000, 7, workers=3, block_size=4096)
    assert a == b
    assert abs(a.point - 0.3) < 4 * a.stderr


def test_replicate_blocks_layout():
    sizes = replicate_blocks(lambda r, n: n, 10, 0, block_size=4)
    assert sizes == [4, 4, 2]
    first = replicate_blocks(lambda r, n: r.random(), 8, 3, block_size=4)
    shifted = replicate_blocks(lambda r, n: r.random(), 4, 3, block_size=4, stream_offset=1)
    assert first[1] == shifted[0]
    with pytest.raises(ValueError):
        replicate_blocks(lambda r, n: n, 0, 0)
