"""Estimates, two-sample tests, envelope fits and deterministic replication."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
import math

import numpy as np
from scipy import stats as sps

from .rng import rng_stream

DEFAULT_ALPHA = 0.001
DEFAULT_BLOCK = 1 << 16
SQRT_2LN2 = math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class EstimateCI:
    point: float
    stderr: float
    replicas: int
    ci_low: float
    ci_high: float
    confidence: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TestReport:
    statistic: float
    p_value: float
    sample_sizes: tuple
    alpha: float = DEFAULT_ALPHA
    dof: int = 0

    __test__ = False  # not a pytest class

    @property
    def passed(self) -> bool:
        return self.p_value > self.alpha

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def bernoulli_estimate(successes: int, trials: int, confidence: float = 0.99) -> EstimateCI:
    """Point estimate with a Wilson score interval."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    p = successes / trials
    z = sps.norm.ppf(0.5 + confidence / 2.0)
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return EstimateCI(p, math.sqrt(p * (1.0 - p) / trials), trials,
                      float(min(lo, p)), float(max(hi, p)), confidence)


def mean_estimate(total: float, total_sq: float, n: int, confidence: float = 0.99) -> EstimateCI:
    """Normal-theory interval from running sums."""
    if n <= 1:
        raise ValueError("need at least two observations")
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    se = math.sqrt(var / n)
    z = sps.norm.ppf(0.5 + confidence / 2.0)
    return EstimateCI(float(mean), se, n, float(mean - z * se), float(mean + z * se), confidence)


def sample_mean_estimate(sample, confidence: float = 0.99) -> EstimateCI:
    sample = np.asarray(sample, dtype=float)
    return mean_estimate(float(sample.sum()), float((sample * sample).sum()), sample.size,
                         confidence)


def within_se(estimate: float, target: float, stderr: float, k: float = 3.0) -> bool:
    return abs(estimate - target) <= k * stderr


# ---------------------------------------------------------------------------
# two-sample tests


def ks_two_sample(a, b, alpha: float = DEFAULT_ALPHA) -> TestReport:
    """Two-sided two-sample KS test, asymptotic p-value (meant for n >= 1e3)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs non-empty samples")
    res = sps.ks_2samp(a, b, alternative="two-sided", method="asymp")
    return TestReport(float(res.statistic), float(res.pvalue), (a.size, b.size), alpha)


def integer_histograms(a, b):
    """Counts of two integer samples on their joint support."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    ca = np.bincount(a - lo, minlength=hi - lo + 1)
    cb = np.bincount(b - lo, minlength=hi - lo + 1)
    return ca, cb


def merge_sparse_bins(counts_a, counts_b, min_expected: float = 5.0):
    """Merge adjacent bins until each has pooled expected count >= min_expected
    in both arms. Returns merged (a, b) arrays."""
    counts_a = np.asarray(counts_a, dtype=float)
    counts_b = np.asarray(counts_b, dtype=float)
    if counts_a.shape != counts_b.shape:
        raise ValueError("histograms must share a bin set")
    na, nb = counts_a.sum(), counts_b.sum()
    frac_a, frac_b = na / (na + nb), nb / (na + nb)
    merged_a, merged_b = [], []
    acc_a = acc_b = 0.0
    for ca, cb in zip(counts_a, counts_b):
        acc_a += ca
        acc_b += cb
        pooled = acc_a + acc_b
        if pooled * min(frac_a, frac_b) >= min_expected:
            merged_a.append(acc_a)
            merged_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a + acc_b > 0:
        if merged_a:
            merged_a[-1] += acc_a
            merged_b[-1] += acc_b
        else:
            merged_a.append(acc_a)
            merged_b.append(acc_b)
    return np.array(merged_a), np.array(merged_b)


def chi2_two_sample(counts_a, counts_b, alpha: float = DEFAULT_ALPHA) -> TestReport:
    """Two-sample chi-square homogeneity test on aligned histograms.

    Sparse tail bins are merged first; degrees of freedom are (merged bins - 1).
    """
    a, b = merge_sparse_bins(counts_a, counts_b)
    if a.size < 2:
        raise ValueError("fewer than two usable bins after merging")
    na, nb = a.sum(), b.sum()
    k1 = math.sqrt(nb / na)
    k2 = math.sqrt(na / nb)
    stat = float(np.sum((k1 * a - k2 * b) ** 2 / (a + b)))
    dof = a.size - 1
    p = float(sps.chi2.sf(stat, dof))
    return TestReport(stat, p, (int(na), int(nb)), alpha, dof)


def chi2_two_sample_values(a, b, alpha: float = DEFAULT_ALPHA) -> TestReport:
    return chi2_two_sample(*integer_histograms(a, b), alpha=alpha)


def chi2_independence(u, v, alpha: float = DEFAULT_ALPHA, max_levels: int = 12) -> TestReport:
    """Chi-square independence test for two integer samples.

    Each variable is cut into at most ``max_levels`` quantile classes so that
    the contingency table has no empty margins.
    """
    u = np.asarray(u)
    v = np.asarray(v)

    def classes(w):
        edges = np.unique(np.quantile(w, np.linspace(0, 1, max_levels + 1)[1:-1],
                                      method="lower"))
        return np.searchsorted(edges, w, side="right")

    cu, cv = classes(u), classes(v)
    table = np.zeros((cu.max() + 1, cv.max() + 1))
    np.add.at(table, (cu, cv), 1)
    table = table[table.sum(1) > 0][:, table.sum(0) > 0]
    if min(table.shape) < 2:
        raise ValueError("degenerate contingency table")
    stat, p, dof, _ = sps.chi2_contingency(table, correction=False)
    return TestReport(float(stat), float(p), (u.size, v.size), alpha, int(dof))


def two_proportion_z(s1, n1, s2, n2):
    """Return (difference, combined standard error) for two binomial rates."""
    p1, p2 = s1 / n1, s2 / n2
    se = math.sqrt(p1 * (1 - p1) / n1 + p2 * (1 - p2) / n2)
    return p1 - p2, se


def bonferroni(alpha: float, n_tests: int) -> float:
    return alpha / max(int(n_tests), 1)


# ---------------------------------------------------------------------------
# envelope fitting


@dataclass(frozen=True)
class EnvelopeFit:
    model: str
    constant: float           # c-hat (x_exp_decay / exp_decay prefactor / ratio max)
    rate: float               # decay rate (exp_decay), sqrt(2 ln 2) for x_exp_decay
    lower_constant: float     # ratio min (ratio_constant), else nan
    slope: float              # least-squares slope of the log-linearised data
    slope_stderr: float
    max_violation: float      # max over points of point / envelope - 1 (<= 0 means covered)


def _weighted_slope(x, ylog, weights):
    w = np.asarray(weights, dtype=float)
    x = np.asarray(x, dtype=float)
    xm = np.sum(w * x) / w.sum()
    ym = np.sum(w * ylog) / w.sum()
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (ylog - ym)) / sxx
    intercept = ym - slope * xm
    resid = ylog - intercept - slope * x
    dof = max(x.size - 2, 1)
    # scale the nominal weights by the observed residual scatter when it is larger
    s2 = max(np.sum(w * resid ** 2) / dof, 1.0)
    return float(slope), float(intercept), float(math.sqrt(s2 / sxx))


def fit_envelope(x, prob, model: str, upper=None, stderr=None, kernel=None) -> EnvelopeFit:
    """Fit a bounding envelope to Monte Carlo tail probabilities.

    ``x_exp_decay``: smallest c with p <= c x exp(-sqrt(2 ln 2) x) at every
    point (using the CI upper ends when given), plus the weighted slope of
    ln(p/x) against x.
    ``exp_decay``: rate from the weighted slope of ln p on x, then the
    smallest prefactor c1 with p <= c1 exp(-rate x).
    ``ratio_constant``: max and min of p / kernel.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(prob, dtype=float)
    if x.size < 3:
        raise ValueError("need at least three points")
    if not np.any(p > 0):
        raise ValueError("all probabilities are zero")
    up = p if upper is None else np.asarray(upper, dtype=float)
    if stderr is None:
        weights = np.ones_like(p)
    else:
        se = np.asarray(stderr, dtype=float)
        rel = np.where(p > 0, se / np.where(p > 0, p, 1.0), np.inf)
        weights = np.where(np.isfinite(rel) & (rel > 0), 1.0 / np.maximum(rel, 1e-12) ** 2, 0.0)
        if not np.any(weights > 0):
            weights = np.ones_like(p)
    pos = p > 0
    nan = float("nan")

    if model == "x_exp_decay":
        shape = x * np.exp(-SQRT_2LN2 * x)
        c = float(np.max(up / shape))
        slope, _, slope_se = _weighted_slope(x[pos], np.log(p[pos] / x[pos]), weights[pos])
        viol = float(np.max(p / (c * shape)) - 1.0)
        return EnvelopeFit(model, c, SQRT_2LN2, nan, slope, slope_se, viol)
    if model == "exp_decay":
        slope, _, slope_se = _weighted_slope(x[pos], np.log(p[pos]), weights[pos])
        rate = -slope
        c1 = float(np.max(up * np.exp(rate * x)))
        viol = float(np.max(p / (c1 * np.exp(-rate * x))) - 1.0)
        return EnvelopeFit(model, c1, rate, nan, slope, slope_se, viol)
    if model == "ratio_constant":
        if kernel is None:
            raise ValueError("ratio_constant needs kernel values")
        k = np.asarray(kernel, dtype=float)
        ratio = p / k
        return EnvelopeFit(model, float(ratio.max()), nan, float(ratio.min()), nan, nan,
                           0.0)
    raise ValueError(f"unknown envelope model {model!r}")


# ---------------------------------------------------------------------------
# deterministic replication


def replicate_blocks(task, replicas: int, master_seed: int, workers: int = 1,
                     block_size: int = DEFAULT_BLOCK, stream_offset: int = 0) -> list:
    """Run ``task(rng, n)`` over fixed blocks of replicas; outputs in block order.

    Block ``j`` always covers replicas ``[j*block_size, (j+1)*block_size)`` and
    draws from stream ``stream_offset + j``, so the outputs do not depend on
    ``workers``.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    n_blocks = -(-replicas // block_size)
    sizes = [min(block_size, replicas - j * block_size) for j in range(n_blocks)]

    def run(j):
        return task(rng_stream(master_seed, stream_offset + j), sizes[j])

    if workers <= 1 or n_blocks == 1:
        return [run(j) for j in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(n_blocks)))


def replicate_sums(task, replicas: int, master_seed: int, workers: int = 1,
                   block_size: int = DEFAULT_BLOCK, stream_offset: int = 0):
    """Sum of the block outputs of :func:`replicate_blocks`, added in block order."""
    results = replicate_blocks(task, replicas, master_seed, workers, block_size, stream_offset)
    total = np.array(results[0], copy=True)
    for r in results[1:]:
        total = total + np.asarray(r)
    return total


def replicate(task, replicas: int, master_seed: int, workers: int = 1, kind: str = "bernoulli",
              confidence: float = 0.99, block_size: int = DEFAULT_BLOCK,
              stream_offset: int = 0) -> EstimateCI:
    """Replicate a task and merge into an :class:`EstimateCI`.

    ``kind="bernoulli"``: the task returns ``(successes, trials)``.
    ``kind="mean"``: the task returns ``(sum, sum_of_squares, count)``.
    """
    sums = replicate_sums(task, replicas, master_seed, workers, block_size, stream_offset)
    if kind == "bernoulli":
        return bernoulli_estimate(int(sums[0]), int(sums[1]), confidence)
    if kind == "mean":
        return mean_estimate(float(sums[0]), float(sums[1]), int(sums[2]), confidence)
    raise ValueError(f"unknown replicate kind {kind!r}")
