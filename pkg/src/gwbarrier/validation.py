"""The acceptance suite: one function per criterion, each returning a record.

Every function is a pure function of ``(master_seed, workers, quick)`` apart
from its timing fields, which are named ``runtime_s`` and excluded from the
determinism comparison.
"""

from dataclasses import dataclass, field
import math
import time

import numpy as np
from scipy.special import roots_legendre
from scipy.stats import norm

from .barrier import bridge_barrier_mc
from .chain import besq0_marginal_check, simulate_chain
from .experiments import BarrierGridConfig, run_barrier_grid, summarize_grid
from .gw import extinction_prob, gw_jump, simulate_gw
from .rng import rng_stream
from .sampler import Besq0Kernel, besq0_density, sample_offspring_sum
from .stats import (DEFAULT_ALPHA, bernoulli_estimate, bonferroni, chi2_two_sample_values,
                    fit_envelope, replicate_sums, two_proportion_z)
from .tree import (SQRT_2LN2, cover_probability_table, cover_samples, cover_statistic,
                   excursion_length_stats, kappa, ray_knight_cover_counts)

TIMING_FIELDS = ("runtime_s", "wall_time")


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    runtime_s: float
    limit_s: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"[{verdict}] criterion {self.number:2d} {self.name}: "
                f"{self.runtime_s:.1f}s (limit {self.limit_s:.0f}s)")

    def to_record(self) -> dict:
        return {"schema_version": 1, "experiment": "validate", "criterion": self.number,
                "name": self.name, "passed": self.passed, "runtime_s": self.runtime_s,
                "limit_s": self.limit_s, "details": self.details}


def _timed(number, name, limit, body):
    t0 = time.perf_counter()
    passed, details = body()
    return CriterionResult(number, name, bool(passed), time.perf_counter() - t0, limit, details)


# ---------------------------------------------------------------------------
# 1. kernel mass


def besq0_total_mass(x, t, order=64):
    """Atom plus the mass of the continuous part, by composite Gauss-Legendre.

    The continuous part is exp(-(x+y)/2t) times a power series in y, so it is
    smooth on [0, inf); pieces of width about one spread out to 40 spreads past
    x leave a tail far below double precision. Returns ``(total, error)``,
    where the error estimate is the change when the order is doubled.
    """
    kern = Besq0Kernel(x, t)
    spread = 2.0 * math.sqrt(x * t) + 2.0 * t
    cuts = np.array(sorted({0.0} | {max(x + k * spread, 0.0) for k in range(-6, 41)}))
    lo, hi = cuts[:-1, None], cuts[1:, None]

    def mass(n):
        nodes, weights = roots_legendre(n)
        y = (lo + hi) / 2 + (hi - lo) / 2 * nodes
        return float(np.sum((hi - lo) / 2 * weights * besq0_density(kern, y)))

    coarse, fine = mass(order), mass(2 * order)
    return kern.atom_probability + fine, abs(fine - coarse)


def criterion_kernel_mass(master_seed=0, workers=1, quick=False):
    def body():
        rows = []
        for x, t in ((1.0, 1.0), (10.0, 1.0), (100.0, 5.0)):
            total, quad_err = besq0_total_mass(x, t)
            rows.append({"x": x, "t": t, "total_mass": total, "error": abs(total - 1.0),
                         "quadrature_error": quad_err})
        return all(r["error"] <= 1e-10 for r in rows), {"points": rows}
    return _timed(1, "besq0 kernel mass", 1.0, body)


# ---------------------------------------------------------------------------
# 2. extinction


def _extinction_task(n, L):
    def task(rng, size):
        t = np.full(size, n, dtype=np.int64)
        for _ in range(L):
            t = t[t > 0]
            if t.size == 0:
                break
            t = sample_offspring_sum(t, rng)
        alive = int(np.count_nonzero(t))
        return np.array([size - alive, size], dtype=np.int64)
    return task


def criterion_extinction(master_seed=0, workers=1, quick=False, replicas=10 ** 6):
    def body():
        rows = []
        for i, n in enumerate((1, 4, 16, 64)):
            for j, L in enumerate((2, 8, 32)):
                s = replicate_sums(_extinction_task(n, L), replicas, master_seed, workers,
                                   stream_offset=(100 + 4 * i + j) << 20)
                est = bernoulli_estimate(int(s[0]), int(s[1]))
                exact = float(extinction_prob(n, L))
                se = math.sqrt(exact * (1 - exact) / replicas)
                rows.append({"n": n, "L": L, "estimate": est.point, "exact": exact,
                             "stderr": se, "z": (est.point - exact) / se,
                             "passed": abs(est.point - exact) <= 3 * se})
        return all(r["passed"] for r in rows), {"points": rows, "replicas": replicas}
    return _timed(2, "exact extinction", 120.0, body)


# ---------------------------------------------------------------------------
# 3. chain identities


def conditioned_chain_counts(m, horizon, samples, rng, batch=200_000):
    """Traversal counts T_0..T_horizon of chains from u = m, kept when T_0 = m."""
    kept = []
    total = 0
    while total < samples:
        path = simulate_chain(float(m), horizon + 1, rng, size=batch)
        rows = path.traversals[path.traversals[:, 0] == m]
        kept.append(rows)
        total += rows.shape[0]
    return np.concatenate(kept)[:samples]


def criterion_chain(master_seed=0, workers=1, quick=False, samples=10 ** 5):
    def body():
        grid_e = [(u, s) for u in (1.0, 4.0, 25.0) for s in (1, 5, 20)]
        grid_d = [(m, l) for m in (1, 3, 10) for l in range(1, 7)]
        n_tests = 2 * len(grid_e) + len(grid_d)
        alpha = bonferroni(DEFAULT_ALPHA, n_tests)
        part_e = []
        for i, (u, steps) in enumerate(grid_e):
            rep = besq0_marginal_check(u, steps, samples, rng_stream(master_seed, 200 + i),
                                       alpha=alpha)
            atom_p = float(2 * norm.sf(abs(rep.atom_z)))
            part_e.append({**rep.to_dict(), "atom_p_value": atom_p,
                           "passed": rep.ks.p_value > alpha and atom_p > alpha})
        part_d = []
        for i, m in enumerate((1, 3, 10)):
            chain = conditioned_chain_counts(m, 6, samples, rng_stream(master_seed, 300 + i))
            gw = simulate_gw(m, 6, rng_stream(master_seed, 310 + i), size=samples).populations
            for l in range(1, 7):
                rep = chi2_two_sample_values(chain[:, l], gw[:, l], alpha=alpha)
                part_d.append({"m": m, "level": l, "statistic": rep.statistic,
                               "p_value": rep.p_value, "dof": rep.dof,
                               "passed": rep.p_value > alpha})
        ok = all(r["passed"] for r in part_e + part_d)
        return ok, {"alpha_corrected": alpha, "tests": n_tests, "besq_marginal": part_e,
                    "gw_marginal": part_d, "samples": samples}
    return _timed(3, "interleaved chain identities", 300.0, body)


# ---------------------------------------------------------------------------
# 4. gw_jump


def criterion_gw_jump(master_seed=0, workers=1, quick=False, draws=10 ** 6):
    def body():
        grid = [(n, l) for n in (1, 2, 5, 20) for l in (2, 3, 10)]
        alpha = bonferroni(DEFAULT_ALPHA, len(grid))
        rows = []
        for i, (n, l) in enumerate(grid):
            jump = gw_jump(n, l, rng_stream(master_seed, 400 + i), size=draws)
            iterated = simulate_gw(n, l, rng_stream(master_seed, 420 + i),
                                   size=draws).populations[:, -1]
            rep = chi2_two_sample_values(jump, iterated, alpha=alpha)
            rows.append({"n": n, "l": l, "statistic": rep.statistic, "p_value": rep.p_value,
                         "dof": rep.dof, "passed": rep.p_value > alpha})
        return all(r["passed"] for r in rows), {"alpha_corrected": alpha, "points": rows}
    return _timed(4, "gw_jump exactness", 120.0, body)


# ---------------------------------------------------------------------------
# 5. Ray-Knight equivalence


def transition_counts(L, table, targets=(0.1, 0.3, 0.5, 0.7, 0.9)):
    """Excursion counts n whose exact cover probability is nearest each target."""
    q = table.lower[L, :table.valid]
    out = []
    for p in targets:
        n = int(np.argmin(np.abs(q - p)))
        if n not in out:
            out.append(n)
    return out


def criterion_ray_knight(master_seed=0, workers=1, quick=False, replicas=10 ** 5):
    def body():
        rows = []
        for i, L in enumerate((4, 6, 8)):
            table = cover_probability_table(L, cap=600)
            ns = transition_counts(L, table)
            direct = cover_samples(L, replicas, master_seed, workers,
                                   stream_offset=(500 + i) << 20)
            for j, n in enumerate(ns):
                d_succ = int(np.sum(direct[:, 1] <= n))
                b_succ, trials = ray_knight_cover_counts(
                    L, n, replicas, master_seed, workers,
                    stream_offset=((510 + 10 * i + j) << 20))
                diff, se = two_proportion_z(d_succ, replicas, b_succ, trials)
                rows.append({"L": L, "n": n, "direct": d_succ / replicas,
                             "branching": b_succ / trials, "exact": table.probability(L, n),
                             "difference": diff, "combined_se": se,
                             "passed": abs(diff) <= 3 * se})
        # exact DP oracle at L = 3, n = 5
        table3 = cover_probability_table(3, cap=400)
        exact = table3.probability(3, 5)
        b_succ, trials = ray_knight_cover_counts(3, 5, replicas, master_seed, workers,
                                                 stream_offset=600 << 20)
        se = math.sqrt(exact * (1 - exact) / trials)
        oracle = {"L": 3, "n": 5, "exact": exact, "branching": b_succ / trials, "stderr": se,
                  "bracket": float(table3.gap[3, 5]),
                  "passed": abs(b_succ / trials - exact) <= 3 * se}
        ok = all(r["passed"] for r in rows) and oracle["passed"]
        return ok, {"sweep": rows, "dp_oracle": oracle, "replicas": replicas}
    return _timed(5, "ray-knight equivalence", 600.0, body)


# ---------------------------------------------------------------------------
# 6. Brownian bridge


BRIDGE_POINTS = ((2.0, 3.0, 20.0), (1.0, 1.0, 20.0), (1.0, 2.0, 10.0), (0.5, 0.5, 5.0),
                 (4.0, 4.0, 40.0), (0.5, 5.0, 20.0))


def criterion_bridge(master_seed=0, workers=1, quick=False, replicas=10 ** 5):
    def body():
        rows = []
        for i, (gx, gy, L) in enumerate(BRIDGE_POINTS):
            est = bridge_barrier_mc(gx, gy, 0.0, 0.0, L, replicas, master_seed, workers=workers,
                                    stream_offset=(700 + i) << 20)
            err = abs(est.extrapolated.point - est.exact)
            rows.append({"x_minus_a": gx, "y_minus_b": gy, "L": L, "exact": est.exact,
                         "raw_step_1_64": est.raw.point, "raw_step_1_16": est.coarse.point,
                         "extrapolated": est.extrapolated.point,
                         "stderr": est.extrapolated.stderr, "error": err,
                         "passed": err <= 3 * est.extrapolated.stderr + 0.01})
        return all(r["passed"] for r in rows), {"points": rows, "replicas": replicas}
    return _timed(6, "brownian bridge oracle", 180.0, body)


# ---------------------------------------------------------------------------
# 7. barrier grid


def criterion_barrier_grid(master_seed=0, workers=1, quick=False, replicas=None):
    if replicas is None:
        replicas = 10 ** 5 if quick else 10 ** 7
    tol = 0.5 if quick else 0.2

    def body():
        records = run_barrier_grid(BarrierGridConfig(), replicas, master_seed, workers)
        summary = summarize_grid(records, tol)
        excluded = [{k: r[k] for k in ("event", "L", "x", "y", "a", "b", "kernel")}
                    for r in records if r["excluded"]]
        return summary["passed"], {"replicas": replicas, "stability_tolerance": tol,
                                   "summary": summary, "excluded": excluded,
                                   "points": len(records)}
    return _timed(7, "barrier ratio stability", 3600.0, body)


# ---------------------------------------------------------------------------
# 8. cover tightness


def criterion_cover_tightness(master_seed=0, workers=1, quick=False, samples=1000):
    def body():
        rows = []
        for i, L in enumerate((8, 10, 12, 14)):
            cs = cover_samples(L, samples, master_seed, workers, stream_offset=(800 + i) << 20)
            stat = cover_statistic(cs[:, 0], L)
            q1, med, q3 = np.percentile(stat, [25, 50, 75])
            rows.append({"L": L, "q25": q1, "median": med, "q75": q3, "iqr": q3 - q1,
                         "min_steps_ok": bool(np.all(cs[:, 0] >= 2 ** (L + 1) - 1))})
        meds = [r["median"] for r in rows]
        span = max(meds) - min(meds)
        ok = all(r["iqr"] <= 4 and r["min_steps_ok"] for r in rows) and span < 1.5
        return ok, {"levels": rows, "median_span": span, "samples": samples}
    return _timed(8, "cover-time tightness", 1800.0, body)


# ---------------------------------------------------------------------------
# 9 / 10. tails


TAIL_DEPTH = 16
TAIL_EXACT_DEPTH = 10


def _tail_points(xs, sign, replicas, master_seed, workers, offset, table):
    L = TAIL_DEPTH
    centre = kappa(L) * L
    rows = []
    for i, x in enumerate(xs):
        n = int(round((centre + sign * x) ** 2 / 2.0))
        x_eff = sign * (math.sqrt(2.0 * n) - centre)
        succ, trials = ray_knight_cover_counts(L, n, replicas, master_seed, workers,
                                               exact_depth=TAIL_EXACT_DEPTH, table=table,
                                               stream_offset=(offset + i) << 20)
        rows.append({"x": x, "n": n, "x_eff": x_eff, "covered": succ, "trials": trials})
    return rows


def criterion_right_tail(master_seed=0, workers=1, quick=False, replicas=10 ** 6):
    def body():
        table = cover_probability_table(TAIL_EXACT_DEPTH)
        xs = [1.0 + 0.5 * i for i in range(7)]
        rows = _tail_points(xs, +1, replicas, master_seed, workers, 900, table)
        for r in rows:
            est = bernoulli_estimate(r["trials"] - r["covered"], r["trials"])
            r.update(uncovered=est.point, stderr=est.stderr, ci_high=est.ci_high,
                     ci_low=est.ci_low)
        xe = np.array([r["x_eff"] for r in rows])
        p = np.array([r["uncovered"] for r in rows])
        se = np.array([r["stderr"] for r in rows])
        upper = fit_envelope(xe, p, "x_exp_decay", upper=[r["ci_high"] for r in rows],
                             stderr=se)
        # lower envelope: smallest ratio to x exp(-sqrt(2 ln 2) x)
        shape = xe * np.exp(-SQRT_2LN2 * xe)
        c_low = float(np.min(np.array([r["ci_low"] for r in rows]) / shape))
        nominal = [r["x"] for r in rows]
        slope_nominal = fit_envelope(nominal, p, "x_exp_decay", stderr=se).slope
        target = -SQRT_2LN2
        ok = abs(upper.slope - target) <= 0.15 * abs(target)
        return ok, {"points": rows, "slope": upper.slope, "slope_stderr": upper.slope_stderr,
                    "slope_nominal_x": slope_nominal, "target": target,
                    "c_upper": upper.constant, "c_lower": c_low,
                    "exact_depth": TAIL_EXACT_DEPTH, "replicas": replicas}
    return _timed(9, "right-tail shape", 1200.0, body)


def criterion_left_tail(master_seed=0, workers=1, quick=False, replicas=10 ** 6):
    def body():
        table = cover_probability_table(TAIL_EXACT_DEPTH)
        xs = [float(i) for i in range(7)]
        rows = _tail_points(xs, -1, replicas, master_seed, workers, 950, table)
        for r in rows:
            est = bernoulli_estimate(r["covered"], r["trials"])
            r.update(covered_prob=est.point, stderr=est.stderr, ci_high=est.ci_high,
                     not_covered=1.0 - est.point)
        xe = np.array([r["x_eff"] for r in rows])
        p = np.array([r["covered_prob"] for r in rows])
        fit = fit_envelope(xe, p, "exp_decay", upper=[r["ci_high"] for r in rows],
                           stderr=[r["stderr"] for r in rows])
        rate_ci_low = -fit.slope - 3 * fit.slope_stderr
        # P(not covered) >= 1 - c1 exp(-c2 x) at every point, by construction of c1
        bound_ok = all(r["not_covered"] >= 1 - fit.constant * math.exp(-fit.rate * r["x_eff"])
                       - 1e-15 for r in rows)
        ok = fit.rate > 0 and rate_ci_low > 0 and bound_ok
        return ok, {"points": rows, "c1": fit.constant, "c2": fit.rate,
                    "c2_stderr": fit.slope_stderr, "c2_ci_low": rate_ci_low,
                    "exact_depth": TAIL_EXACT_DEPTH, "replicas": replicas}
    return _timed(10, "left-tail shape", 1200.0, body)


# ---------------------------------------------------------------------------
# 11. excursions


def criterion_excursions(master_seed=0, workers=1, quick=False, replicas=10 ** 5):
    def body():
        rows = []
        for i, L in enumerate((1, 4, 8)):
            st = excursion_length_stats(L, replicas, master_seed, workers,
                                        stream_offset=(1100 + i) << 20)
            rows.append({"L": L, "mean": st.mean.point, "stderr": st.mean.stderr,
                         "expected": st.expected_mean, "second_moment": st.second_moment,
                         "minimum": st.minimum,
                         "passed": abs(st.mean.point - st.expected_mean) <= 3 * st.mean.stderr
                         and st.minimum >= 2})
        return all(r["passed"] for r in rows), {"levels": rows, "replicas": replicas}
    return _timed(11, "excursion mean", 120.0, body)


CRITERIA = {
    1: criterion_kernel_mass,
    2: criterion_extinction,
    3: criterion_chain,
    4: criterion_gw_jump,
    5: criterion_ray_knight,
    6: criterion_bridge,
    7: criterion_barrier_grid,
    8: criterion_cover_tightness,
    9: criterion_right_tail,
    10: criterion_left_tail,
    11: criterion_excursions,
}


def strip_timing(obj):
    """Drop timing fields recursively (for determinism comparisons)."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_FIELDS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def criterion_determinism(results, master_seed=0, workers=2, quick=False, rerun=None):
    """Re-run each suite with another worker count and compare serialized output."""
    from .cli import dumps_record

    def body():
        rows = []
        for res in results:
            fn = CRITERIA[res.number]
            again = fn(master_seed=master_seed, workers=workers, quick=quick) \
                if rerun is None else rerun(res.number, workers)
            a = dumps_record(strip_timing(res.to_record()))
            b = dumps_record(strip_timing(again.to_record()))
            rows.append({"criterion": res.number, "identical": a == b})
        return all(r["identical"] for r in rows), {"workers": workers, "suites": rows}
    return _timed(12, "determinism across worker counts", float("inf"), body)


def run_suite(master_seed=0, workers=1, quick=True, numbers=None, report=print,
              determinism_workers=2):
    """Run the acceptance suite; returns the list of CriterionResult."""
    numbers = sorted(CRITERIA) if numbers is None else numbers
    results = []
    for k in numbers:
        if k == 12:
            continue
        res = CRITERIA[k](master_seed=master_seed, workers=workers, quick=quick)
        results.append(res)
        if report:
            report(res.line())
    if numbers == sorted(CRITERIA) or 12 in numbers:
        det = criterion_determinism(results, master_seed, determinism_workers, quick)
        results.append(det)
        if report:
            report(det.line())
    return results
