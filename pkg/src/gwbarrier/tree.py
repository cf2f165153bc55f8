"""Binary tree with an extra root: cover times, excursions and edge-count fields.

Layout: vertex 0 is the extra root rho, vertex 1 is o, and vertex ``v >= 1``
has children ``2v`` and ``2v + 1``. Level ``l`` (distance ``l + 1`` from rho)
holds vertices ``2**l .. 2**(l+1) - 1``; the leaves are level ``L``. The
parent of every ``v >= 1`` is ``v >> 1``.

Edge counts are stored on the lower endpoint: ``counts[v]`` is the number of
walk steps from the parent of ``v`` into ``v``.

Sibling law. Given ``m`` traversals into an internal vertex, the walk leaves
that vertex towards a child ``N`` times before its ``m``-th step back up, with
N negative binomial (m, 1/3), and each of those steps picks a child uniformly.
The two child counts therefore have joint generating function
``(3 - s - t)^-m``: each marginal is the critical geometric GW step, but the
pair is positively correlated (covariance m). ``sibling_law="walk"`` samples
this exact law; ``"independent"`` draws the two children independently, which
is not the walk's law and is kept for comparison only.
"""

from dataclasses import dataclass
import math

import numpy as np
from numba import njit
from scipy.stats import nbinom

from .errors import ResourceError
from .rng import xoshiro_below, xoshiro_state
from .stats import EstimateCI, mean_estimate, replicate_blocks, replicate_sums

SQRT_2LN2 = math.sqrt(2.0 * math.log(2.0))
MAX_WALK_DEPTH = 24
SIBLING_LAWS = ("walk", "independent")


@dataclass(frozen=True)
class TreeSpec:
    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be at least 1")

    @property
    def n_vertices(self) -> int:
        return 1 << (self.depth + 1)

    @property
    def n_leaves(self) -> int:
        return 1 << self.depth

    @property
    def first_leaf(self) -> int:
        return 1 << self.depth

    def level(self, v: int) -> int:
        """Level of vertex v; rho is level -1."""
        return -1 if v == 0 else v.bit_length() - 1

    def degree(self, v: int) -> int:
        if v == 0:
            return 1
        if v >= self.first_leaf:
            return 1
        return 3

    def ancestor(self, v: int, l: int) -> int:
        """Ancestor of v at level l (l = -1 gives rho)."""
        lv = self.level(v)
        if not -1 <= l <= lv:
            raise ValueError("level out of range")
        return 0 if l == -1 else v >> (lv - l)


def _check_depth(L, max_depth):
    if L < 1:
        raise ValueError("L must be at least 1")
    if L > max_depth:
        raise ResourceError(f"L={L} exceeds the walk memory budget (max depth {max_depth})")


def kappa(L) -> float:
    """sqrt(2 ln 2) - ln L / (sqrt(2 ln 2) L)."""
    if L < 1:
        raise ValueError("L must be at least 1")
    return SQRT_2LN2 - math.log(L) / (SQRT_2LN2 * L)


def cover_centering(L) -> float:
    """sqrt(2 ln 2) L - ln L / sqrt(2 ln 2), which equals kappa(L) * L."""
    return SQRT_2LN2 * L - math.log(L) / SQRT_2LN2


# ---------------------------------------------------------------------------
# direct walks


@dataclass(frozen=True)
class CoverSample:
    cover_steps: int
    excursions_at_cover: int
    last_vertex: int


@njit(cache=True, nogil=True)
def _step(v, first_leaf, s):
    if v == 0:
        return 1
    if v >= first_leaf:
        return v >> 1
    r = xoshiro_below(s, 3)
    if r == 0:
        return v >> 1
    return 2 * v + r - 1


@njit(cache=True, nogil=True)
def _cover_walk(L, s, visited):
    first_leaf = 1 << L
    n_vertices = 1 << (L + 1)
    visited[:] = 0
    visited[0] = 1
    seen = 1
    v = 0
    steps = 0
    returns = 0
    while True:
        v = _step(v, first_leaf, s)
        steps += 1
        if v == 0:
            returns += 1
        elif visited[v] == 0:
            visited[v] = 1
            seen += 1
            if seen == n_vertices:
                return steps, returns + 1, v


@njit(cache=True, nogil=True)
def _cover_block(L, n_samples, s):
    visited = np.zeros(1 << (L + 1), dtype=np.uint8)
    out = np.empty((n_samples, 3), dtype=np.int64)
    for i in range(n_samples):
        a, b, c = _cover_walk(L, s, visited)
        out[i, 0] = a
        out[i, 1] = b
        out[i, 2] = c
    return out


def simulate_cover(L, rng, max_depth=MAX_WALK_DEPTH) -> CoverSample:
    """Run simple random walk from rho until every vertex has been visited."""
    _check_depth(L, max_depth)
    row = _cover_block(L, 1, xoshiro_state(rng))[0]
    return CoverSample(int(row[0]), int(row[1]), int(row[2]))


def cover_samples(L, replicas, master_seed, workers=1, block_size=64, stream_offset=0,
                  max_depth=MAX_WALK_DEPTH):
    """Independent cover samples as an int array with columns
    (cover_steps, excursions_at_cover, last_vertex)."""
    _check_depth(L, max_depth)

    def task(rng, n):
        return _cover_block(L, n, xoshiro_state(rng))

    blocks = replicate_blocks(task, replicas, master_seed, workers, block_size, stream_offset)
    return np.concatenate(blocks, axis=0)


@njit(cache=True, nogil=True)
def _excursion_walk(L, n, s, counts, first_hit):
    first_leaf = 1 << L
    counts[:] = 0
    first_hit[:] = -1
    first_hit[0] = 0
    v = 0
    steps = 0
    returns = 0
    while returns < n:
        w = _step(v, first_leaf, s)
        steps += 1
        if w > v:
            counts[w] += 1
        if first_hit[w] < 0:
            first_hit[w] = steps
        if w == 0:
            returns += 1
        v = w
    return steps


@dataclass
class EdgeCountField:
    """Downward traversal counts on a tree of depth ``depth``.

    ``counts[v]`` for heap index v >= 1; ``counts[1]`` is the root-edge count,
    which equals the excursion budget ``n``.
    """

    depth: int
    counts: np.ndarray
    n: int

    def level(self, l: int) -> np.ndarray:
        return self.counts[1 << l:1 << (l + 1)]

    @property
    def leaf_counts(self) -> np.ndarray:
        return self.level(self.depth)

    def path_counts(self, leaf_index: int) -> np.ndarray:
        """Counts T_0..T_depth along the path to leaf number ``leaf_index``."""
        v = (1 << self.depth) + leaf_index
        return np.array([self.counts[v >> (self.depth - l)] for l in range(self.depth + 1)],
                        dtype=np.int64)

    def covered(self) -> bool:
        return bool(np.all(self.leaf_counts > 0))

    def check(self):
        """Structural invariants: root count n and zero-absorbing subtrees."""
        assert self.counts[1] == self.n
        for l in range(self.depth):
            parents = self.level(l)
            kids = self.level(l + 1).reshape(-1, 2)
            assert np.all(kids[parents == 0] == 0)


def simulate_excursions(L, n, rng, max_depth=MAX_WALK_DEPTH):
    """Walk until the n-th return to rho and record every downward traversal.

    Returns ``(field, D_n, covered)``. The leaf y is hit before D_n exactly
    when its edge count is positive; this is asserted on every run.
    """
    _check_depth(L, max_depth)
    if n < 0:
        raise ValueError("n must be non-negative")
    size = 1 << (L + 1)
    counts = np.zeros(size, dtype=np.int64)
    first_hit = np.full(size, -1, dtype=np.int64)
    d_n = int(_excursion_walk(L, n, xoshiro_state(rng), counts, first_hit))
    field = EdgeCountField(L, counts, n)
    leaves = slice(1 << L, size)
    hit_before = (first_hit[leaves] >= 0) & (first_hit[leaves] <= d_n)
    if not np.array_equal(hit_before, counts[leaves] > 0):
        raise AssertionError("hitting times disagree with leaf traversal counts")
    return field, d_n, field.covered() if n > 0 else False


@njit(cache=True, nogil=True)
def _excursion_lengths(L, n, s):
    first_leaf = 1 << L
    total = 0.0
    total_sq = 0.0
    minimum = np.int64(1) << 62
    for _ in range(n):
        v = _step(0, first_leaf, s)
        steps = 1
        while v != 0:
            v = _step(v, first_leaf, s)
            steps += 1
        total += steps
        total_sq += float(steps) * steps
        if steps < minimum:
            minimum = steps
    return np.array([total, total_sq, float(n), float(minimum)])


@dataclass(frozen=True)
class ExcursionStats:
    mean: EstimateCI
    second_moment: float
    minimum: int
    expected_mean: float


def expected_excursion_length(L) -> float:
    return 2.0 ** (L + 2) - 2.0


def excursion_length_stats(L, replicas, master_seed, workers=1, stream_offset=0,
                           max_depth=MAX_WALK_DEPTH) -> ExcursionStats:
    """Mean (with CI) and second moment of excursion lengths from rho."""
    _check_depth(L, max_depth)

    def task(rng, n):
        return _excursion_lengths(L, n, xoshiro_state(rng))

    blocks = replicate_blocks(task, replicas, master_seed, workers, stream_offset=stream_offset)
    arr = np.stack(blocks)
    total, total_sq, count = arr[:, 0].sum(), arr[:, 1].sum(), int(arr[:, 2].sum())
    return ExcursionStats(mean_estimate(total, total_sq, count), total_sq / count,
                          int(arr[:, 3].min()), expected_excursion_length(L))


def cover_statistic(sample, L) -> float:
    """sqrt(C_L / 2^(L+1)) - (sqrt(2 ln 2) L - ln L / sqrt(2 ln 2)).

    ``sample`` is a :class:`CoverSample` or a cover-step count (array-like ok).
    """
    steps = sample.cover_steps if isinstance(sample, CoverSample) else np.asarray(sample)
    out = np.sqrt(np.asarray(steps, dtype=float) / 2.0 ** (L + 1)) - cover_centering(L)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# exact cover probability by dynamic programming


@dataclass(frozen=True)
class CoverTable:
    """Cover probabilities q[d, m] for remaining depth d and incoming count m.

    ``lower`` and ``upper`` bracket the exact value: counts at or beyond the
    truncation cap are treated as never / always covering. ``valid`` is the
    number of leading counts whose bracket is below ``tolerance`` at every
    depth.
    """

    lower: np.ndarray
    upper: np.ndarray
    sibling_law: str
    tolerance: float

    @property
    def cap(self) -> int:
        return self.lower.shape[1]

    @property
    def depth(self) -> int:
        return self.lower.shape[0] - 1

    @property
    def gap(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def valid(self) -> int:
        bad = np.nonzero(np.any(self.gap > self.tolerance, axis=0))[0]
        return self.cap if bad.size == 0 else int(bad[0])

    def probability(self, depth, m) -> float:
        if m >= self.valid:
            raise ValueError(f"count {m} beyond the validated range {self.valid}")
        return float(self.lower[depth, m])


def _nb_matrix(max_shape, cap, p):
    """Rows: shape k = 0..max_shape-1; columns: failures 0..cap-1; plus tails."""
    k = np.arange(max_shape)[:, None]
    j = np.arange(cap)[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        mat = nbinom.pmf(j, np.maximum(k, 1), p)
        tail = nbinom.sf(cap - 1, np.maximum(np.arange(max_shape), 1), p)
    mat[0] = 0.0
    mat[0, 0] = 1.0
    tail[0] = 0.0
    return mat, tail


def cover_probability_table(depth, cap=1600, sibling_law="walk", tolerance=1e-12) -> CoverTable:
    """Exact probability that every leaf of a depth-``d`` subtree is reached,
    given ``m`` traversals into its top vertex, for d <= ``depth``, m < ``cap``.

    q_0(m) = 1[m >= 1]. Under the walk law
    q_d(m) = sum_a NB(a; m, 1/2) q_{d-1}(a) g(m + a) with
    g(k) = sum_b NB(b; k, 2/3) q_{d-1}(b), since given the first child's count
    a, the second child's count is negative binomial (m + a, 2/3).
    Under the independent law q_d(m) = (sum_a NB(a; m, 1/2) q_{d-1}(a))^2.
    """
    if sibling_law not in SIBLING_LAWS:
        raise ValueError(f"unknown sibling law {sibling_law!r}")
    half, half_tail = _nb_matrix(cap, cap, 0.5)
    lo = (np.arange(cap) >= 1).astype(float)
    hi = lo.copy()
    rows_lo, rows_hi = [lo], [hi]
    if sibling_law == "walk":
        third, third_tail = _nb_matrix(2 * cap, cap, 2.0 / 3.0)
        idx = np.arange(cap)[:, None] + np.arange(cap)[None, :]
    for _ in range(depth):
        if sibling_law == "walk":
            g_lo = third @ lo
            g_hi = third @ hi + third_tail
            new_lo = np.sum(half * lo[None, :] * g_lo[idx], axis=1)
            new_hi = np.sum(half * hi[None, :] * g_hi[idx], axis=1) + half_tail
        else:
            new_lo = (half @ lo) ** 2
            new_hi = np.minimum(half @ hi + half_tail, 1.0) ** 2
        new_lo[0] = new_hi[0] = 0.0
        # rounding can push either bracket a few ulps outside [0, 1]
        lo, hi = np.clip(new_lo, 0.0, 1.0), np.clip(new_hi, 0.0, 1.0)
        rows_lo.append(lo)
        rows_hi.append(hi)
    return CoverTable(np.array(rows_lo), np.array(rows_hi), sibling_law, tolerance)


# ---------------------------------------------------------------------------
# branching (Ray-Knight) sampler


@njit(cache=True, nogil=True)
def _children(m, law, rng):
    if law == 0:
        n = rng.negative_binomial(m, 1.0 / 3.0)
        a = rng.binomial(n, 0.5) if n > 0 else 0
        return a, n - a
    return rng.negative_binomial(m, 0.5), rng.negative_binomial(m, 0.5)


@njit(cache=True, nogil=True)
def _rk_cover_block(L, n, n_rep, rng, law, exact_depth, table):
    cap = table.shape[1]
    stack_m = np.empty(2 * L + 4, dtype=np.int64)
    stack_l = np.empty(2 * L + 4, dtype=np.int64)
    covered = 0
    for _ in range(n_rep):
        if n <= 0:
            continue
        stack_m[0] = n
        stack_l[0] = 0
        top = 1
        ok = True
        while top > 0:
            top -= 1
            m = stack_m[top]
            lvl = stack_l[top]
            if m == 0:
                ok = False
                break
            rem = L - lvl
            if rem == 0:
                continue
            if rem <= exact_depth and m < cap:
                if rng.random() >= table[rem, m]:
                    ok = False
                    break
                continue
            a, b = _children(m, law, rng)
            stack_m[top] = b
            stack_l[top] = lvl + 1
            stack_m[top + 1] = a
            stack_l[top + 1] = lvl + 1
            top += 2
        if ok:
            covered += 1
    return np.array([covered, n_rep], dtype=np.int64)


def _law_code(sibling_law):
    if sibling_law not in SIBLING_LAWS:
        raise ValueError(f"unknown sibling law {sibling_law!r}")
    return SIBLING_LAWS.index(sibling_law)


def _shortcut_table(exact_depth, table, sibling_law):
    if exact_depth <= 0:
        return np.zeros((1, 0))
    if table is None:
        table = cover_probability_table(exact_depth, sibling_law=sibling_law)
    if table.depth < exact_depth or table.sibling_law != sibling_law:
        raise ValueError("cover table does not match the requested shortcut")
    return np.ascontiguousarray(table.lower[:, :table.valid])


def ray_knight_cover_counts(L, n, replicas, master_seed, workers=1, sibling_law="walk",
                            exact_depth=0, table=None, stream_offset=0, block_size=None):
    """(covered, trials) for the branching sampler over many replicas.

    With ``exact_depth = d > 0``, a vertex with remaining depth <= d and count
    below the table's validated range is resolved by one Bernoulli draw with
    the exact DP probability instead of expanding its subtree. The outcome has
    the same law as full expansion (up to the table tolerance).
    """
    if L < 1 or n < 0:
        raise ValueError("need L >= 1 and n >= 0")
    law = _law_code(sibling_law)
    tab = _shortcut_table(min(exact_depth, L), table, sibling_law)
    depth_cut = min(exact_depth, L) if tab.shape[1] else 0

    def task(rng, k):
        return _rk_cover_block(int(L), int(n), k, rng, law, depth_cut, tab)

    kwargs = {} if block_size is None else {"block_size": block_size}
    s = replicate_sums(task, replicas, master_seed, workers, stream_offset=stream_offset,
                       **kwargs)
    return int(s[0]), int(s[1])


def ray_knight_cover_indicator(L, n, rng, sibling_law="walk", exact_depth=0, table=None) -> bool:
    """One draw of the event that every leaf edge is traversed in n excursions,
    sampled from the branching description of the edge counts (no walk)."""
    if L < 1 or n < 0:
        raise ValueError("need L >= 1 and n >= 0")
    tab = _shortcut_table(min(exact_depth, L), table, sibling_law)
    depth_cut = min(exact_depth, L) if tab.shape[1] else 0
    out = _rk_cover_block(int(L), int(n), 1, rng, _law_code(sibling_law), depth_cut, tab)
    return bool(out[0])


def subtree_counts(L, k, m, rng, sibling_law="walk") -> EdgeCountField:
    """Branching field of depth L - k with m traversals into the top vertex."""
    if not 0 <= k <= L:
        raise ValueError("need 0 <= k <= L")
    if m < 0:
        raise ValueError("m must be non-negative")
    depth = L - k
    counts = np.zeros(1 << (depth + 1), dtype=np.int64)
    counts[1] = m
    law = _law_code(sibling_law)
    for l in range(depth):
        parents = counts[1 << l:1 << (l + 1)]
        kids = np.zeros((parents.size, 2), dtype=np.int64)
        live = parents > 0
        if np.any(live):
            pm = parents[live]
            if law == 0:
                total = rng.negative_binomial(pm, 1.0 / 3.0)
                first = rng.binomial(total, 0.5)
                kids[live, 0] = first
                kids[live, 1] = total - first
            else:
                kids[live, 0] = rng.negative_binomial(pm, 0.5)
                kids[live, 1] = rng.negative_binomial(pm, 0.5)
        counts[1 << (l + 1):1 << (l + 2)] = kids.ravel()
    return EdgeCountField(depth, counts, m)


# ---------------------------------------------------------------------------
# barrier survivors


def survivor_thresholds(depth) -> np.ndarray:
    """Smallest count meeting kappa(depth)(depth - l) + l_depth^(1/4) <= sqrt(2T),
    for l = 0..depth (entries 0 and depth unused)."""
    kb = kappa(depth)
    out = np.zeros(depth + 1, dtype=np.int64)
    for l in range(1, depth):
        bar = kb * (depth - l) + min(l, depth - l) ** 0.25
        out[l] = math.ceil(bar * bar / 2.0 - 1e-9)
    return out


@njit(cache=True, nogil=True)
def _survivor_dfs(depth, m, rng, law, need):
    stack_m = np.empty(2 * depth + 4, dtype=np.int64)
    stack_l = np.empty(2 * depth + 4, dtype=np.int64)
    stack_m[0] = m
    stack_l[0] = 0
    top = 1
    found = 0
    while top > 0:
        top -= 1
        c = stack_m[top]
        lvl = stack_l[top]
        if lvl == depth:
            if c == 0:
                found += 1
            continue
        if 0 < lvl and c < need[lvl]:
            continue
        if c == 0:
            # lvl == 0 only: with depth >= 2 the barrier at level 1 then fails
            if depth == 1:
                found += 2
            continue
        a, b = _children(c, law, rng)
        stack_m[top] = b
        stack_l[top] = lvl + 1
        stack_m[top + 1] = a
        stack_l[top + 1] = lvl + 1
        top += 2
    return found


def count_barrier_survivors(L, k, m, rng, sibling_law="walk") -> int:
    """Leaves of a depth-(L-k) subtree, entered m times, whose count path stays
    above kappa_bar (Lbar - l) + l_Lbar^(1/4) for l = 1..Lbar-1 and ends at 0.

    kappa_bar = kappa(Lbar) with Lbar = L - k. Subtrees whose count drops
    below the barrier are pruned.
    """
    if not 0 <= k < L:
        raise ValueError("need 0 <= k < L")
    if m < 0:
        raise ValueError("m must be non-negative")
    depth = L - k
    need = survivor_thresholds(depth)
    return int(_survivor_dfs(depth, int(m), rng, _law_code(sibling_law), need))
