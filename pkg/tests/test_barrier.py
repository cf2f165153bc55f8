import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st
from scipy import integrate

from gwbarrier.barrier import (SQRT2, TubeSpec, WindowH, barrier_value, bound_kernel_thm11,
                               bridge_barrier_mc, brownian_bridge_barrier_exact,
                               count_events, estimate_event_probability, event_thresholds,
                               is_half_square_integer, lclt_kernel,
                               line_inverse_square_integral, line_value)
from gwbarrier.errors import ConfigError
from gwbarrier.gw import extinction_prob, simulate_gw
from gwbarrier.sampler import besq0_step
from gwbarrier.stats import two_proportion_z


def spec(**kw):
    base = dict(a=4.0, b=4.0, x=8.0, y=8.0, L=16)
    base.update(kw)
    return TubeSpec(**base)


# geometry -------------------------------------------------------------------

def test_barrier_values_worked_examples():
    s = TubeSpec(a=0.0, b=10.0, x=10.0, y=10.0, L=10, C=1.0, epsilon=0.25)
    assert barrier_value(s, 5, "lower_minus") == pytest.approx(5 - 5 ** 0.25)
    assert barrier_value(s, 5, "lower_minus") == pytest.approx(3.5046, abs=1e-4)
    for which, end in [("lower_minus", 0.0), ("lower_plus", 0.0), ("upper", 10.0)]:
        assert barrier_value(s, 0, which) == end
    assert line_value(2, 4, 1, 2) == 3


def test_barrier_value_errors():
    s = spec()
    with pytest.raises(ValueError):
        barrier_value(s, 17, "upper")
    with pytest.raises(ValueError):
        barrier_value(s, 3, "middle")


@pytest.mark.parametrize("kw", [dict(epsilon=0.5), dict(epsilon=0.0), dict(delta=0.0),
                                dict(C=-1.0), dict(L=0), dict(x=-2.0), dict(L=2.5)])
def test_tubespec_validation(kw):
    with pytest.raises(ConfigError):
        spec(**kw)


def test_start_population():
    assert spec(x=SQRT2 * 3).start_population() == 9
    with pytest.raises(ConfigError):
        spec(x=3.0).start_population()
    assert is_half_square_integer(2.0) and not is_half_square_integer(1.0)


def test_window_closed_and_lattice():
    w = WindowH(2.0, 1.0)
    assert w.contains(2.0) and w.contains(3.0) and not w.contains(3.0001)
    # sqrt(2T) in [2, 3] means T in {2, 3, 4}
    assert w.population_range() == (2, 4)
    # [2.1, 2.3] misses sqrt(2 Z+) = {..., 2, sqrt 6 = 2.449, ...}
    assert not WindowH(2.1, 0.2).hits_lattice()
    assert WindowH(0.0, 0.5).population_range() == (0, 0)
    with pytest.raises(ConfigError):
        WindowH(1.0, 0.0)


@given(st.floats(0.0, 30.0), st.floats(0.05, 3.0))
@example(1e-05, 1.0)
def test_window_range_matches_membership(low, width):
    w = WindowH(low, width)
    lo, hi = w.population_range()
    t = np.arange(0, int((low + width) ** 2) + 3)
    z = np.sqrt(2.0 * t)
    # the integer range absorbs rounding at the ends; compare away from them
    clear = (np.abs(z - w.low) > 1e-7) & (np.abs(z - w.high) > 1e-7)
    inside = w.contains(z)
    np.testing.assert_array_equal(inside[clear], ((t >= lo) & (t <= hi))[clear])


def test_c_tilde_flag():
    assert spec(C_tilde=9.5).c_tilde_ok()
    # 2C + 2 delta + eta + sqrt 2 = 9.414 with the defaults
    assert not spec(C_tilde=9.4).c_tilde_ok()
    tags = spec(C_tilde=9.4).hypotheses()
    assert not tags["lower_b"] and not tags["c_tilde_ok"]


@given(st.integers(1, 11), st.integers(1, 11), st.floats(0, 1), st.floats(0, 1))
def test_hypothesis_tags_nest(kx, ky, fa, fb):
    x, y = SQRT2 * kx, SQRT2 * ky
    tags = TubeSpec(a=fa * x, b=fb * y, x=x, y=y, L=16).hypotheses()
    assert not tags["lower_b"] or tags["upper_a"]
    assert not tags["lclt_lower"] or tags["lclt_upper"]


# kernels --------------------------------------------------------------------

def test_bridge_formula():
    assert brownian_bridge_barrier_exact(3.0, 5.0, 3.0, 1.0, 10.0) == 0.0
    # (x-a)(y-b) = L/2
    assert brownian_bridge_barrier_exact(2.0, 5.0, 0.0, 0.0, 20.0) == pytest.approx(
        1 - math.exp(-1), abs=1e-7)
    with pytest.raises(ValueError):
        brownian_bridge_barrier_exact(1.0, 1.0, 2.0, 0.0, 4.0)


@given(st.floats(0, 5), st.floats(0, 5), st.floats(1, 50), st.floats(0.01, 1))
def test_bridge_formula_monotone(gx, gy, L, bump):
    p = brownian_bridge_barrier_exact(gx, gy, 0, 0, L)
    assert brownian_bridge_barrier_exact(gx + bump, gy, 0, 0, L) >= p
    assert brownian_bridge_barrier_exact(gx, gy + bump, 0, 0, L) >= p
    assert brownian_bridge_barrier_exact(gx, gy, 0, 0, L + bump) <= p


def test_kernel_worked_example():
    # (1 * 1) / 16 * sqrt(4 / 64) = 0.0625 * 0.25
    assert bound_kernel_thm11(4, 4, 4, 4, 16, "upper_a") == pytest.approx(0.015625)
    assert lclt_kernel(6, 2, 8) == pytest.approx(math.sqrt(6 / 16) * math.exp(-1))
    assert lclt_kernel(6, 2, 8) == pytest.approx(0.22528, abs=1e-5)
    assert lclt_kernel(5.0, 5.0, 16) == pytest.approx(0.25)


def test_kernel_variants():
    full = bound_kernel_thm11(2, 8, 1, 3, 16, "upper_a")
    assert bound_kernel_thm11(2, 8, 1, 3, 16, "lower_b") == pytest.approx(full)
    # sqrt(x/(yL)) = sqrt(1.5) > 1 here, so lower_b caps it
    big = bound_kernel_thm11(12, 0.5, 6, 0, 16, "upper_a")
    capped = bound_kernel_thm11(12, 0.5, 6, 0, 16, "lower_b")
    assert capped == pytest.approx(big / math.sqrt(1.5))
    assert bound_kernel_thm11(12, 0.5, 6, 0, 16, "small_y") == pytest.approx(capped)
    with pytest.raises(ValueError):
        bound_kernel_thm11(1, 1, 0, 0, 1)
    with pytest.raises(ValueError):
        bound_kernel_thm11(1, 0, 0, 0, 8, "upper_a")
    with pytest.raises(ValueError):
        lclt_kernel(0, 1, 8)


@given(st.floats(0.1, 20), st.floats(0.1, 20), st.integers(2, 100))
def test_lclt_ratio_identity(x, y, L):
    assert lclt_kernel(x, y, L) / lclt_kernel(y, x, L) == pytest.approx(x / y, rel=1e-12)


@given(st.floats(0.5, 10), st.floats(0, 5), st.integers(2, 64))
def test_kernel_decreases_away_from_diagonal(y, d, L):
    near = bound_kernel_thm11(y, y, 0, 0, L) / math.sqrt(y / (y * L))
    far = bound_kernel_thm11(y + d, y, d, 0, L) / math.sqrt((y + d) / (y * L))
    # same (1+x-a)(1+y-b) factor, larger |x-y|
    assert far <= near * (1 + 1e-12)


@given(st.floats(0.2, 20), st.floats(0.2, 20), st.integers(3, 64))
def test_line_integral_against_quadrature(a, b, L):
    quad, _ = integrate.quad(lambda s: line_value(a, b, s, L) ** -2, 1, L - 1)
    assert line_inverse_square_integral(a, b, L) == pytest.approx(quad, rel=1e-8)


# bridge Monte Carlo -----------------------------------------------------------

def test_bridge_mc_bias_and_extrapolation():
    est = bridge_barrier_mc(2.0, 3.0, 0.0, 0.0, 20.0, 60_000, 5)
    exact = est.exact
    # grid checks miss crossings: the coarse grid overshoots more than the fine one
    assert est.coarse.point >= est.raw.point >= exact - 3 * est.raw.stderr
    assert abs(est.raw.point - exact) <= 3 * est.raw.stderr + 0.01 + 0.015
    assert abs(est.extrapolated.point - exact) <= 3 * est.extrapolated.stderr + 0.01


def test_bridge_mc_grid_must_divide():
    with pytest.raises(ConfigError):
        bridge_barrier_mc(1, 1, 0, 0, 1.0 / 128, 10, 0)


# event thresholds and estimators ---------------------------------------------

@given(st.integers(0, 10), st.floats(0, 1), st.floats(0, 1), st.integers(0, 400))
def test_integer_thresholds_match_real_barrier(kx, fa, fb, t):
    x = SQRT2 * (kx + 1)
    s = TubeSpec(a=fa * x, b=fb * x, x=x, y=x, L=12)
    z = math.sqrt(2.0 * t)
    for event, lo_name in [("gw_lower_barrier", "lower_minus"), ("gw_tube", "lower_plus")]:
        th = event_thresholds(event, s)
        for l in range(1, s.L):
            assert (t >= th.lower[l]) == (z >= barrier_value(s, l, lo_name) - 1e-12)
            if event == "gw_tube":
                assert (t <= th.upper[l]) == (z <= barrier_value(s, l, "upper") + 1e-12)


def _direct_gw_event(event, s, n, rng):
    """Independent route: numpy paths, barrier read on the sqrt(2T) scale."""
    z = np.sqrt(2.0 * simulate_gw(s.start_population(), s.L, rng, size=n).populations)
    ok = s.window.contains(z[:, -1])
    for l in range(1, s.L):
        if event == "gw_lower_barrier":
            ok &= z[:, l] >= barrier_value(s, l, "lower_minus")
        elif event == "gw_tube":
            ok &= (z[:, l] >= barrier_value(s, l, "lower_plus")) & (
                z[:, l] <= barrier_value(s, l, "upper"))
    return int(ok.sum())


@pytest.mark.parametrize("event", ["gw_lower_barrier", "gw_tube", "gw_window_only"])
def test_gw_events_against_direct_route(event, rng):
    s = TubeSpec(a=2.0, b=2.0, x=4.0, y=4.0, L=8)
    n = 100_000
    est = estimate_event_probability(event, s, n, 3)
    direct = _direct_gw_event(event, s, n, rng)
    diff, se = two_proportion_z(round(est.point * n), n, direct, n)
    assert est.point > 0.01
    assert abs(diff) <= 4 * se


def test_bessel_event_against_direct_route(rng):
    s = TubeSpec(a=2.0, b=2.0, x=4.0, y=4.0, L=8)
    n = 60_000
    est = estimate_event_probability("bessel_lower_barrier", s, n, 4)
    sq = np.full(n, 16.0)
    ok = np.ones(n, dtype=bool)
    for l in range(1, s.L + 1):
        sq = besq0_step(sq, 1.0, rng)
        if l < s.L:
            ok &= np.sqrt(sq) >= barrier_value(s, l, "lower_minus")
    ok &= s.window.contains(np.sqrt(sq))
    diff, se = two_proportion_z(round(est.point * n), n, int(ok.sum()), n)
    assert abs(diff) <= 4 * se


def test_window_at_zero_is_extinction():
    x = SQRT2 * 3
    s = TubeSpec(a=0.0, b=0.0, x=x, y=0.0, L=10, delta=1.0)
    est = estimate_event_probability("gw_window_only", s, 100_000, 8)
    p = float(extinction_prob(9, 10))
    assert abs(est.point - p) <= 3 * math.sqrt(p * (1 - p) / 100_000)


def test_trivial_lower_barrier_equals_window():
    s = TubeSpec(a=0.0, b=0.0, x=4.0, y=4.0, L=12, C=0.0)
    lower = estimate_event_probability("gw_lower_barrier", s, 50_000, 9)
    window = estimate_event_probability("gw_window_only", s, 50_000, 9)
    assert lower.point == window.point


def test_sandwich_on_common_paths():
    s = TubeSpec(a=4.0, b=4.0, x=8.0, y=8.0, L=16)
    ths = [event_thresholds(e, s) for e in ("gw_lower_barrier", "gw_tube")]
    counts, trials = count_events("gw", 16, 32, ths, 200_000, 1)
    # the tube event is contained in the one-sided event path by path
    assert counts[1] <= counts[0] and trials == 200_000


def test_estimator_worker_invariance():
    s = spec()
    one = estimate_event_probability("gw_lower_barrier", s, 150_000, 12, workers=1)
    two = estimate_event_probability("gw_lower_barrier", s, 150_000, 12, workers=2)
    assert one == two


def test_estimator_errors():
    with pytest.raises(ConfigError):
        estimate_event_probability("gw_tube", spec(x=3.0), 10, 0)
    with pytest.raises(ConfigError):
        estimate_event_probability("gw_sideways", spec(), 10, 0)
    with pytest.raises(ConfigError):
        estimate_event_probability("gw_tube", spec(), 0, 0)
