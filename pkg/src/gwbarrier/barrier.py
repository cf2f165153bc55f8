r"""Barrier geometry, analytic kernels and Monte Carlo barrier-event estimators.

Paths are read on the square-root scale: a Galton-Watson path is seen through
``Z_l = sqrt(2 T_l)`` and a Bessel-0 path through its radial value ``Y_l``.
Lines are :math:`f_{a,b}(l; L) = a + (b - a) l / L` and the perturbations use
``l_L = min(l, L - l)``.
"""

from dataclasses import asdict, dataclass
import math

import numpy as np
from numba import njit

from .errors import ConfigError
from .stats import EstimateCI, bernoulli_estimate, mean_estimate, replicate_sums

SQRT2 = math.sqrt(2.0)
EVENTS = ("gw_lower_barrier", "gw_tube", "gw_window_only",
          "bessel_lower_barrier", "bessel_tube")
_TOL = 1e-9
_NO_UPPER = np.iinfo(np.int64).max // 4


def line_value(a, b, l, L):
    return a + (b - a) * l / L


def distance_to_end(l, L):
    return min(l, L - l)


def is_half_square_integer(x) -> bool:
    """True when x^2 / 2 is a non-negative integer (up to rounding)."""
    h = x * x / 2.0
    return x >= 0 and abs(h - round(h)) <= _TOL * max(1.0, h)


@dataclass(frozen=True)
class WindowH:
    """Closed terminal window ``[low, low + width]``."""

    low: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigError("window width must be positive")

    @property
    def high(self):
        return self.low + self.width

    def contains(self, value):
        value = np.asarray(value, dtype=float)
        out = (value >= self.low) & (value <= self.high)
        return bool(out) if out.ndim == 0 else out

    def population_range(self):
        """Integer range ``(lo, hi)`` of T with sqrt(2T) in the window (hi < lo if empty)."""
        if self.high < 0:
            return 1, 0
        lo = 0 if self.low <= 0 else math.ceil(self.low ** 2 / 2.0 * (1.0 - _TOL))
        hi = math.floor(self.high ** 2 / 2.0 * (1.0 + _TOL))
        return lo, hi

    def hits_lattice(self) -> bool:
        """Whether the window meets the reachable set {0, sqrt 2, 2, sqrt 6, ...}."""
        lo, hi = self.population_range()
        return lo <= hi


@dataclass(frozen=True)
class TubeSpec:
    a: float
    b: float
    x: float
    y: float
    L: int
    C: float = 1.0
    C_tilde: float = 9.5
    epsilon: float = 0.25
    delta: float = 1.0
    eta: float = 4.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ConfigError(f"L must be a positive integer, got {self.L}")
        if not 0.0 < self.epsilon < 0.5:
            raise ConfigError(f"epsilon must lie in (0, 1/2), got {self.epsilon}")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.C < 0 or self.C_tilde < 0:
            raise ConfigError("C and C_tilde must be non-negative")
        if not self.eta > 1:
            raise ConfigError("eta must exceed 1")
        if self.x < 0 or self.y < 0:
            raise ConfigError("x and y must be non-negative")

    @property
    def window(self) -> WindowH:
        return WindowH(self.y, self.delta)

    def start_population(self) -> int:
        if not is_half_square_integer(self.x):
            raise ConfigError(f"x={self.x!r}: x^2/2 is not an integer")
        return int(round(self.x * self.x / 2.0))

    def c_tilde_ok(self) -> bool:
        return self.C_tilde >= 2 * self.C + 2 * self.delta + self.eta + SQRT2 - _TOL

    def hypotheses(self) -> dict:
        """Tag which bound hypotheses this point satisfies."""
        x, y, a, b, L, eta = self.x, self.y, self.a, self.b, self.L, self.eta
        lo, hi = SQRT2 - _TOL, eta * L + _TOL
        range_ok = lo <= x <= hi and lo <= y <= hi and is_half_square_integer(x)
        order_ok = 0 <= a <= x + _TOL and 0 <= b <= y + _TOL
        upper_a = range_ok and order_ok
        hits = self.window.hits_lattice()
        lower_b = (upper_a and (1 + x - a) * (1 + y - b) <= eta * L + _TOL
                   and max(a * b, abs(a - b)) >= L / eta - _TOL and hits and self.c_tilde_ok())
        small_y = (lo <= x <= hi and is_half_square_integer(x) and 0 <= y <= SQRT2 + _TOL
                   and order_ok and a >= L / eta - _TOL)
        lclt_upper = range_ok
        lclt_lower = range_ok and hits and L / eta <= x * y + _TOL
        return {"upper_a": upper_a, "lower_b": lower_b, "small_y": small_y,
                "lclt_upper": lclt_upper, "lclt_lower": lclt_lower,
                "window_hits_lattice": hits, "c_tilde_ok": self.c_tilde_ok()}

    def to_dict(self):
        return asdict(self)


def barrier_value(spec: TubeSpec, l, which: str) -> float:
    """Barrier heights at integer time ``l``.

    ``lower_minus``: f_{a,b} - C l_L^(1/2-eps); ``lower_plus``: f_{a,b} + C
    l_L^(1/2-eps); ``upper``: f_{x,y} + C_tilde l_L^(1/2+eps).
    """
    L = spec.L
    if not 0 <= l <= L:
        raise ValueError(f"l={l} outside [0, {L}]")
    ll = distance_to_end(l, L)
    if which == "lower_minus":
        return line_value(spec.a, spec.b, l, L) - spec.C * ll ** (0.5 - spec.epsilon)
    if which == "lower_plus":
        return line_value(spec.a, spec.b, l, L) + spec.C * ll ** (0.5 - spec.epsilon)
    if which == "upper":
        return line_value(spec.x, spec.y, l, L) + spec.C_tilde * ll ** (0.5 + spec.epsilon)
    raise ValueError(f"unknown barrier {which!r}")


# ---------------------------------------------------------------------------
# analytic kernels


def brownian_bridge_barrier_exact(x, y, a, b, L):
    """P(Brownian bridge from x to y on [0, L] stays above f_{a,b})."""
    if a > x or b > y:
        raise ValueError("need a <= x and b <= y")
    if not L > 0:
        raise ValueError("L must be positive")
    return -math.expm1(-2.0 * (x - a) * (y - b) / L)


def bound_kernel_thm11(x, y, a, b, L, variant="upper_a"):
    """Constant-free barrier kernel.

    ``upper_a``: (1+x-a)(1+y-b)/L * sqrt(x/(yL)) * exp(-(x-y)^2/2L);
    ``lower_b``: same with sqrt(x/(yL)) capped at 1;
    ``small_y``: same with sqrt(x/(yL)) replaced by 1.
    """
    if not L >= 2:
        raise ValueError("L must be at least 2")
    base = (1.0 + x - a) * (1.0 + y - b) / L * math.exp(-(x - y) ** 2 / (2.0 * L))
    if variant == "small_y":
        return base
    if not y > 0:
        raise ValueError("y must be positive for this variant")
    root = math.sqrt(x / (y * L))
    if variant == "upper_a":
        return base * root
    if variant == "lower_b":
        return base * min(root, 1.0)
    raise ValueError(f"unknown variant {variant!r}")


def lclt_kernel(x, y, L):
    """sqrt(x/(yL)) * exp(-(x-y)^2 / 2L)."""
    if not (x > 0 and y > 0 and L > 0):
        raise ValueError("x, y and L must be positive")
    return math.sqrt(x / (y * L)) * math.exp(-(x - y) ** 2 / (2.0 * L))


def line_inverse_square_integral(a, b, L):
    """Closed form of the integral of f_{a,b}(s;L)^-2 over s in [1, L-1].

    Equals (L-2) / (ab + (a-b)^2 (1 - 1/L) / L); needs f_{a,b} > 0 on [1, L-1].
    """
    if L < 2:
        raise ValueError("L must be at least 2")
    denom = a * b + (a - b) ** 2 / L * (1.0 - 1.0 / L)
    if not denom > 0:
        raise ValueError("line must stay positive on [1, L-1]")
    return (L - 2.0) / denom


# ---------------------------------------------------------------------------
# Brownian bridge Monte Carlo


@njit(cache=True)
def _bridge_block(start_gap, end_gap, L, n_fine, ratio, n_paths, rng):
    h = L / n_fine
    ok_fine = 0
    ok_coarse = 0
    est_sum = 0.0
    est_sq = 0.0
    for _ in range(n_paths):
        cur = start_gap
        fine = cur > 0.0
        coarse = fine
        for i in range(1, n_fine):
            left = L - (i - 1) * h
            mean = cur + (end_gap - cur) * h / left
            var = h * (left - h) / left
            cur = mean + math.sqrt(var) * rng.standard_normal()
            if cur <= 0.0:
                fine = False
                if i % ratio == 0:
                    coarse = False
                    break
        if end_gap <= 0.0:
            fine = False
            coarse = False
        f = 1 if fine else 0
        c = 1 if coarse else 0
        ok_fine += f
        ok_coarse += c
        e = 2.0 * f - c
        est_sum += e
        est_sq += e * e
    return np.array([ok_fine, ok_coarse, est_sum, est_sq, n_paths], dtype=np.float64)


@dataclass(frozen=True)
class BridgeEstimate:
    exact: float
    raw: EstimateCI             # grid step ``step``
    coarse: EstimateCI          # grid step ``step * ratio``
    extrapolated: EstimateCI    # 2 * raw - coarse, path by path


def bridge_barrier_mc(x, y, a, b, L, replicas, master_seed, step=1.0 / 64, ratio=4,
                      workers=1, stream_offset=0) -> BridgeEstimate:
    """Discretised Brownian-bridge estimate of the stay-above probability.

    The bridge of the gap ``W_t - f_{a,b}(t)`` (itself a bridge from x-a to
    y-b) is sampled on a grid of width ``step`` and checked at every grid
    point. Grid checks miss excursions below the line between grid points, so
    the raw estimate is biased upward by an amount proportional to sqrt(step).
    The same path read on the coarser grid ``step * ratio`` with ratio = 4 has
    twice the bias, which gives the per-path extrapolated estimator
    ``2 * fine - coarse``.
    """
    n_fine = int(round(L / step))
    if abs(n_fine * step - L) > 1e-9 or n_fine % ratio:
        raise ConfigError("L must be a multiple of step * ratio")

    def task(rng, n):
        return _bridge_block(float(x - a), float(y - b), float(L), n_fine, ratio, n, rng)

    s = replicate_sums(task, replicas, master_seed, workers, stream_offset=stream_offset)
    n = int(s[4])
    return BridgeEstimate(
        brownian_bridge_barrier_exact(x, y, a, b, L),
        bernoulli_estimate(int(s[0]), n),
        bernoulli_estimate(int(s[1]), n),
        mean_estimate(float(s[2]), float(s[3]), n),
    )


# ---------------------------------------------------------------------------
# barrier events


@dataclass(frozen=True)
class EventThresholds:
    """Per-time bounds on the path; index l runs over 0..L.

    GW events store integer population bounds, Bessel events radial bounds.
    """

    lower: np.ndarray
    upper: np.ndarray
    window_low: float
    window_high: float


def event_thresholds(event: str, spec: TubeSpec) -> EventThresholds:
    if event not in EVENTS:
        raise ConfigError(f"unknown event {event!r}")
    L = spec.L
    gw = event.startswith("gw_")
    lower = np.zeros(L + 1)
    upper = np.full(L + 1, np.inf)
    for l in range(1, L):
        if event.endswith("lower_barrier"):
            lower[l] = barrier_value(spec, l, "lower_minus")
        elif event.endswith("tube"):
            lower[l] = barrier_value(spec, l, "lower_plus")
            upper[l] = barrier_value(spec, l, "upper")
    if not gw:
        return EventThresholds(lower, upper, spec.y, spec.y + spec.delta)
    lo_t = np.zeros(L + 1, dtype=np.int64)
    hi_t = np.full(L + 1, _NO_UPPER, dtype=np.int64)
    for l in range(1, L):
        if lower[l] > 0:
            sq = lower[l] ** 2
            lo_t[l] = math.ceil(sq / 2.0 - _TOL * max(1.0, sq))
        if np.isfinite(upper[l]):
            if upper[l] < 0:
                hi_t[l] = -1
            else:
                sq = upper[l] ** 2
                hi_t[l] = math.floor(sq / 2.0 + _TOL * max(1.0, sq))
    wlo, whi = spec.window.population_range()
    return EventThresholds(lo_t, hi_t, wlo, whi)


@njit(cache=True, nogil=True)
def _gw_event_block(L, start, n_paths, rng, lower, upper, win_lo, win_hi, win_first,
                    zero_needed):
    # events sorted by window; window w owns events win_first[w]:win_first[w+1]
    n_events = lower.shape[0]
    n_windows = win_lo.shape[0]
    counts = np.zeros(n_events + 1, dtype=np.int64)
    path = np.empty(L + 1, dtype=np.int64)
    for _ in range(n_paths):
        t = start
        path[0] = t
        for l in range(1, L + 1):
            if t > 0:
                t = rng.negative_binomial(t, 0.5)
            elif not zero_needed:
                break
            path[l] = t
        if t == 0 and not zero_needed:
            continue
        for w in range(n_windows):
            if t < win_lo[w] or t > win_hi[w]:
                continue
            for e in range(win_first[w], win_first[w + 1]):
                ok = True
                for l in range(1, L):
                    v = path[l]
                    if v < lower[e, l] or v > upper[e, l]:
                        ok = False
                        break
                if ok:
                    counts[e] += 1
    counts[n_events] = n_paths
    return counts


@njit(cache=True, nogil=True)
def _bessel_event_block(L, start, n_paths, rng, lower, upper, win_lo, win_hi, win_first,
                        zero_needed):
    n_events = lower.shape[0]
    n_windows = win_lo.shape[0]
    counts = np.zeros(n_events + 1, dtype=np.int64)
    path = np.empty(L + 1, dtype=np.float64)
    for _ in range(n_paths):
        sq = start * start
        path[0] = start
        for l in range(1, L + 1):
            if sq > 0.0:
                k = rng.poisson(sq / 2.0)
                sq = rng.gamma(k, 2.0) if k > 0 else 0.0
            elif not zero_needed:
                break
            path[l] = math.sqrt(sq)
        r = math.sqrt(sq)
        if sq == 0.0 and not zero_needed:
            continue
        for w in range(n_windows):
            if r < win_lo[w] or r > win_hi[w]:
                continue
            for e in range(win_first[w], win_first[w + 1]):
                ok = True
                for l in range(1, L):
                    v = path[l]
                    if v < lower[e, l] or v > upper[e, l]:
                        ok = False
                        break
                if ok:
                    counts[e] += 1
    counts[n_events] = n_paths
    return counts


def _group_by_window(thresholds):
    keys = sorted({(t.window_low, t.window_high) for t in thresholds})
    index = {k: i for i, k in enumerate(keys)}
    order = sorted(range(len(thresholds)),
                   key=lambda i: index[(thresholds[i].window_low, thresholds[i].window_high)])
    first = np.zeros(len(keys) + 1, dtype=np.int64)
    for i in order:
        first[index[(thresholds[i].window_low, thresholds[i].window_high)] + 1] += 1
    first = np.cumsum(first)
    return keys, order, first


def count_events(family: str, L: int, start, thresholds, replicas, master_seed, workers=1,
                 stream_offset=0):
    """Success counts for many events sharing one start and horizon.

    Each simulated path is tested against every event whose terminal window
    contains its endpoint, so the events are estimated on common paths.
    ``family`` is ``"gw"`` (start = initial population) or ``"bessel"``
    (start = radial start). Returns ``(counts per event, trials)``.
    """
    if not thresholds:
        raise ValueError("no events")
    keys, order, first = _group_by_window(thresholds)
    if family == "gw":
        dtype, block = np.int64, _gw_event_block
    elif family == "bessel":
        dtype, block = np.float64, _bessel_event_block
    else:
        raise ValueError(f"unknown family {family!r}")
    lower = np.ascontiguousarray(np.stack([thresholds[i].lower for i in order]).astype(dtype))
    upper_rows = [np.where(np.isinf(thresholds[i].upper), _NO_UPPER, thresholds[i].upper)
                  if family == "gw" else thresholds[i].upper for i in order]
    upper = np.ascontiguousarray(np.stack(upper_rows).astype(dtype))
    win_lo = np.array([k[0] for k in keys], dtype=dtype)
    win_hi = np.array([k[1] for k in keys], dtype=dtype)
    zero_needed = bool(np.any(win_lo <= 0))

    def task(rng, n):
        return block(int(L), dtype(start), n, rng, lower, upper, win_lo, win_hi, first,
                     zero_needed)

    sums = replicate_sums(task, replicas, master_seed, workers, stream_offset=stream_offset)
    counts = np.empty(len(thresholds), dtype=np.int64)
    counts[np.array(order, dtype=np.int64)] = sums[:-1]
    return counts, int(sums[-1])


def estimate_event_probability(event: str, spec: TubeSpec, replicas: int, master_seed: int,
                               workers: int = 1, start=None, confidence=0.99,
                               stream_offset=0) -> EstimateCI:
    """Monte Carlo probability of one barrier event with a Wilson interval.

    GW events start from T_0 = x^2/2 (validated integral); Bessel events from
    radial start x. ``start`` overrides the start value.
    """
    if event not in EVENTS:
        raise ConfigError(f"unknown event {event!r}")
    if replicas < 1:
        raise ConfigError("replicas must be >= 1")
    th = event_thresholds(event, spec)
    if event.startswith("gw_"):
        family = "gw"
        s = spec.start_population() if start is None else int(start)
    else:
        family = "bessel"
        s = spec.x if start is None else float(start)
    counts, trials = count_events(family, spec.L, s, [th], replicas, master_seed, workers,
                                  stream_offset)
    return bernoulli_estimate(int(counts[0]), trials, confidence)
