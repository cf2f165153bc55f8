"""Command-line experiment runner.

    gwbarrier run KIND [--config PATH] [--seed N] [--workers N] [--out PATH]
                       [--format csv|jsonl] [--quick]
    gwbarrier summary RESULTS

KIND is one of barrier, lclt, chain-check, cover-direct, cover-rayknight,
excursion-stats, validate. Exit codes: 0 success, 1 validation suite failed,
2 configuration error, 3 resource or output error.
"""

import argparse
import csv
import io
import itertools
import json
import math
import os
import re
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .barrier import (EVENTS, TubeSpec, bound_kernel_thm11, estimate_event_probability,
                      lclt_kernel)
from .chain import besq0_marginal_check
from .errors import ConfigError, ResourceError
from .rng import rng_stream
from .stats import bernoulli_estimate, fit_envelope
from .tree import (MAX_WALK_DEPTH, cover_probability_table, cover_samples, cover_statistic,
                   excursion_length_stats, kappa, ray_knight_cover_counts)

SCHEMA_VERSION = 1
KINDS = ("barrier", "lclt", "chain-check", "cover-direct", "cover-rayknight",
         "excursion-stats", "validate")
FORMATS = ("csv", "jsonl")
EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3

# grid fields per kind: name -> default list
GRID_DEFAULTS = {
    "barrier": {"L": [16], "x": [4.0], "y": [4.0], "a": [2.0], "b": [2.0],
                "event": ["gw_lower_barrier"], "C": [1.0], "C_tilde": [9.5],
                "epsilon": [0.25], "delta": [1.0], "eta": [4.0]},
    "lclt": {"L": [16], "x": [4.0], "y": [4.0], "delta": [1.0], "eta": [4.0]},
    "chain-check": {"u": [4.0], "steps": [5]},
    "cover-direct": {"L": [8]},
    "cover-rayknight": {"L": [16], "n": [], "x": [1.0], "side": ["right"],
                        "exact_depth": [10], "sibling_law": ["walk"]},
    "excursion-stats": {"L": [4]},
    "validate": {},
}

CSV_COLUMNS = {
    "barrier": ["event", "L", "x", "y", "a", "b", "C", "C_tilde", "epsilon", "delta", "eta",
                "successes", "trials", "estimate", "stderr", "ci_low", "ci_high",
                "kernel_upper_a", "kernel_lower_b", "kernel_small_y", "tag_upper_a",
                "tag_lower_b", "tag_small_y", "tag_lclt_upper", "tag_lclt_lower",
                "tag_window_hits_lattice", "tag_c_tilde_ok", "seed", "wall_time"],
    "lclt": ["L", "x", "y", "delta", "eta", "successes", "trials", "estimate", "stderr",
             "ci_low", "ci_high", "kernel_lclt", "tag_lclt_upper", "tag_lclt_lower",
             "tag_window_hits_lattice", "seed", "wall_time"],
    "chain-check": ["u", "steps", "ks_statistic", "ks_p_value", "atom_chain", "atom_besq",
                    "atom_exact", "atom_z", "alpha", "passed", "replicas", "seed",
                    "wall_time"],
    "cover-direct": ["L", "replicas", "median", "q25", "q75", "iqr", "mean_statistic",
                     "mean_cover_steps", "seed", "wall_time"],
    "cover-rayknight": ["L", "n", "side", "x", "x_eff", "exact_depth", "sibling_law",
                        "covered", "trials", "covered_prob", "uncovered_prob", "stderr",
                        "ci_low", "ci_high", "seed", "wall_time"],
    "excursion-stats": ["L", "replicas", "mean", "stderr", "ci_low", "ci_high", "expected",
                        "second_moment", "minimum", "seed", "wall_time"],
    "validate": ["criterion", "name", "passed", "runtime_s", "limit_s"],
}


@dataclass
class ExperimentConfig:
    kind: str
    grid: dict = field(default_factory=dict)
    replicas: int = 10 ** 5
    master_seed: int = 0
    workers: int = 1
    output: str = "results.jsonl"
    format: str = "jsonl"
    quick: bool = False

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"field 'kind': unknown experiment kind {self.kind!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"field 'format': must be one of {FORMATS}")
        for name in ("replicas", "workers"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"field {name!r}: must be a positive integer, got {v!r}")
        if not isinstance(self.master_seed, int) or not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("field 'master_seed': must be an integer in [0, 2^64)")
        if not isinstance(self.grid, dict):
            raise ConfigError("field 'grid': must be an object of lists")
        allowed = GRID_DEFAULTS[self.kind]
        for key, val in self.grid.items():
            if key not in allowed:
                raise ConfigError(f"field 'grid.{key}': not a grid field of {self.kind!r}")
            if not isinstance(val, list):
                raise ConfigError(f"field 'grid.{key}': grids are explicit lists")
        return self

    def full_grid(self):
        g = {k: list(v) for k, v in GRID_DEFAULTS[self.kind].items()}
        g.update(self.grid)
        return g

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("field 'kind' is required")
        return cls(**d).validate()

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON (line {e.lineno}, column {e.colno}): "
                              f"{e.msg}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)


# ---------------------------------------------------------------------------
# serialization


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _FloatToken(float(obj))
    return obj


class _FloatToken(str):
    def __new__(cls, value):
        if math.isnan(value):
            text = "NaN"
        elif math.isinf(value):
            text = "Infinity" if value > 0 else "-Infinity"
        else:
            text = format(value, ".17g")
            if re.fullmatch(r"-?\d+", text):
                text += ".0"
        return super().__new__(cls, "\x00" + text + "\x00")


_TOKEN = re.compile(r'"\\u0000([^"\\]*)\\u0000"')


def dumps_record(record) -> str:
    """One JSON line; floats written with 17 significant digits."""
    text = json.dumps(_plain(record), sort_keys=False, separators=(",", ":"))
    return _TOKEN.sub(r"\1", text)


def format_float(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def write_records(records, kind, path, fmt):
    try:
        with open(path, "w", newline="") as fh:
            if fmt == "jsonl":
                for r in records:
                    fh.write(dumps_record({"schema_version": SCHEMA_VERSION, **r}) + "\n")
            else:
                cols = CSV_COLUMNS[kind]
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                for r in records:
                    w.writerow([format_float(r.get(c, "")) for c in cols])
    except OSError as e:
        raise ResourceError(f"cannot write {path}: {e}") from None


# ---------------------------------------------------------------------------
# experiment kinds


def _product(grid, keys):
    lists = [grid[k] for k in keys]
    for combo in itertools.product(*lists):
        yield dict(zip(keys, combo))


def _offset(i):
    return (i + 1) << 24


def run_barrier(cfg):
    grid = cfg.full_grid()
    keys = ["event", "L", "x", "y", "a", "b", "C", "C_tilde", "epsilon", "delta", "eta"]
    points = list(_product(grid, keys))
    specs = []
    for i, p in enumerate(points):
        if p["event"] not in EVENTS:
            raise ConfigError(f"grid point {i} {p}: unknown event {p['event']!r}")
        spec = TubeSpec(a=p["a"], b=p["b"], x=p["x"], y=p["y"], L=p["L"], C=p["C"],
                        C_tilde=p["C_tilde"], epsilon=p["epsilon"], delta=p["delta"],
                        eta=p["eta"])
        if p["event"].startswith("gw_"):
            try:
                spec.start_population()
            except ConfigError as e:
                raise ConfigError(f"grid point {i} {p}: {e}") from None
        specs.append(spec)
    out = []
    for i, (p, spec) in enumerate(zip(points, specs)):
        t0 = time.perf_counter()
        est = estimate_event_probability(p["event"], spec, cfg.replicas, cfg.master_seed,
                                         cfg.workers, stream_offset=_offset(i))
        kern = {}
        for variant in ("upper_a", "lower_b", "small_y"):
            try:
                kern[f"kernel_{variant}"] = bound_kernel_thm11(spec.x, spec.y, spec.a, spec.b,
                                                               spec.L, variant)
            except ValueError:
                kern[f"kernel_{variant}"] = float("nan")
        tags = {f"tag_{k}": v for k, v in spec.hypotheses().items()}
        out.append({"experiment": "barrier", **p, "successes": int(round(est.point * est.replicas)),
                    "trials": est.replicas, "estimate": est.point, "stderr": est.stderr,
                    "ci_low": est.ci_low, "ci_high": est.ci_high, **kern, **tags,
                    "seed": cfg.master_seed, "wall_time": time.perf_counter() - t0})
    return out


def run_lclt(cfg):
    grid = cfg.full_grid()
    keys = ["L", "x", "y", "delta", "eta"]
    points = list(_product(grid, keys))
    specs = []
    for i, p in enumerate(points):
        spec = TubeSpec(a=0.0, b=0.0, x=p["x"], y=p["y"], L=p["L"], delta=p["delta"],
                        eta=p["eta"])
        try:
            spec.start_population()
        except ConfigError as e:
            raise ConfigError(f"grid point {i} {p}: {e}") from None
        specs.append(spec)
    out = []
    for i, (p, spec) in enumerate(zip(points, specs)):
        t0 = time.perf_counter()
        est = estimate_event_probability("gw_window_only", spec, cfg.replicas, cfg.master_seed,
                                         cfg.workers, stream_offset=_offset(i))
        tags = spec.hypotheses()
        try:
            kern = lclt_kernel(spec.x, spec.y, spec.L)
        except ValueError:
            kern = float("nan")
        out.append({"experiment": "lclt", **p,
                    "successes": int(round(est.point * est.replicas)), "trials": est.replicas,
                    "estimate": est.point, "stderr": est.stderr, "ci_low": est.ci_low,
                    "ci_high": est.ci_high, "kernel_lclt": kern,
                    "tag_lclt_upper": tags["lclt_upper"], "tag_lclt_lower": tags["lclt_lower"],
                    "tag_window_hits_lattice": tags["window_hits_lattice"],
                    "seed": cfg.master_seed, "wall_time": time.perf_counter() - t0})
    return out


def run_chain_check(cfg):
    out = []
    for i, p in enumerate(_product(cfg.full_grid(), ["u", "steps"])):
        t0 = time.perf_counter()
        rep = besq0_marginal_check(p["u"], p["steps"], cfg.replicas,
                                   rng_stream(cfg.master_seed, _offset(i)))
        out.append({"experiment": "chain-check", **rep.to_dict(), "replicas": cfg.replicas,
                    "seed": cfg.master_seed, "wall_time": time.perf_counter() - t0})
    return out


def run_cover_direct(cfg):
    out = []
    for i, p in enumerate(_product(cfg.full_grid(), ["L"])):
        L = p["L"]
        if L > MAX_WALK_DEPTH:
            raise ResourceError(f"L={L} exceeds the walk memory budget")
        t0 = time.perf_counter()
        cs = cover_samples(L, cfg.replicas, cfg.master_seed, cfg.workers,
                           stream_offset=_offset(i))
        stat = cover_statistic(cs[:, 0], L)
        q1, med, q3 = np.percentile(stat, [25, 50, 75])
        out.append({"experiment": "cover-direct", "L": L, "replicas": cfg.replicas,
                    "median": med, "q25": q1, "q75": q3, "iqr": q3 - q1,
                    "mean_statistic": float(np.mean(stat)),
                    "mean_cover_steps": float(np.mean(cs[:, 0])), "seed": cfg.master_seed,
                    "wall_time": time.perf_counter() - t0})
    return out


def run_cover_rayknight(cfg):
    grid = cfg.full_grid()
    out = []
    tables = {}
    keys = ["L", "exact_depth", "sibling_law"]
    points = []
    for p in _product(grid, keys):
        if grid["n"]:
            for n in grid["n"]:
                points.append({**p, "n": int(n), "side": "", "x": float("nan")})
        else:
            for side in grid["side"]:
                if side not in ("right", "left"):
                    raise ConfigError(f"field 'grid.side': {side!r} is not right/left")
                sign = 1 if side == "right" else -1
                for x in grid["x"]:
                    n = int(round((kappa(p["L"]) * p["L"] + sign * x) ** 2 / 2.0))
                    points.append({**p, "n": n, "side": side, "x": float(x)})
    for i, p in enumerate(points):
        t0 = time.perf_counter()
        L, d = p["L"], min(p["exact_depth"], p["L"])
        key = (d, p["sibling_law"])
        if d > 0 and key not in tables:
            tables[key] = cover_probability_table(d, sibling_law=p["sibling_law"])
        succ, trials = ray_knight_cover_counts(L, p["n"], cfg.replicas, cfg.master_seed,
                                               cfg.workers, sibling_law=p["sibling_law"],
                                               exact_depth=d, table=tables.get(key),
                                               stream_offset=_offset(i))
        est = bernoulli_estimate(succ, trials)
        sign = -1 if p["side"] == "left" else 1
        x_eff = sign * (math.sqrt(2.0 * p["n"]) - kappa(L) * L)
        out.append({"experiment": "cover-rayknight", **p, "x_eff": x_eff, "covered": succ,
                    "trials": trials, "covered_prob": est.point,
                    "uncovered_prob": 1.0 - est.point, "stderr": est.stderr,
                    "ci_low": est.ci_low, "ci_high": est.ci_high, "seed": cfg.master_seed,
                    "wall_time": time.perf_counter() - t0})
    return out


def run_excursion_stats(cfg):
    out = []
    for i, p in enumerate(_product(cfg.full_grid(), ["L"])):
        t0 = time.perf_counter()
        st = excursion_length_stats(p["L"], cfg.replicas, cfg.master_seed, cfg.workers,
                                    stream_offset=_offset(i))
        out.append({"experiment": "excursion-stats", "L": p["L"], "replicas": cfg.replicas,
                    "mean": st.mean.point, "stderr": st.mean.stderr, "ci_low": st.mean.ci_low,
                    "ci_high": st.mean.ci_high, "expected": st.expected_mean,
                    "second_moment": st.second_moment, "minimum": st.minimum,
                    "seed": cfg.master_seed, "wall_time": time.perf_counter() - t0})
    return out


def run_validate(cfg, report=print):
    from .validation import run_suite
    results = run_suite(cfg.master_seed, cfg.workers, quick=cfg.quick, report=report)
    return [r.to_record() for r in results]


RUNNERS = {"barrier": run_barrier, "lclt": run_lclt, "chain-check": run_chain_check,
           "cover-direct": run_cover_direct, "cover-rayknight": run_cover_rayknight,
           "excursion-stats": run_excursion_stats, "validate": run_validate}


def run(cfg: ExperimentConfig):
    """Run an experiment and write its records; returns (exit status, records)."""
    cfg.validate()
    records = RUNNERS[cfg.kind](cfg)
    write_records(records, cfg.kind, cfg.output, cfg.format)
    if cfg.kind == "validate" and not all(r["passed"] for r in records):
        return EXIT_FAILED, records
    return EXIT_OK, records


# ---------------------------------------------------------------------------
# summaries


def read_results(path):
    """Parse a JSONL or CSV results file into a list of dicts."""
    with open(path) as fh:
        text = fh.read()
    if not text.strip():
        return []
    if path.endswith(".csv"):
        rows = list(csv.DictReader(io.StringIO(text)))
        for i, r in enumerate(rows):
            if None in r or any(v is None for v in r.values()):
                raise ConfigError(f"malformed CSV record {i}")
        return [_coerce(r) for r in rows]
    out = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed record {i}: {e.msg}") from None
        if not isinstance(rec, dict):
            raise ConfigError(f"malformed record {i}: not an object")
        out.append(rec)
    return out


def _coerce(row):
    out = {}
    for k, v in row.items():
        if v in ("true", "false"):
            out[k] = v == "true"
            continue
        try:
            out[k] = int(v)
        except ValueError:
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out


def _kind_of(rec):
    if "experiment" in rec:
        return rec["experiment"]
    if "criterion" in rec:
        return "validate"
    if "event" in rec:
        return "barrier"
    return "unknown"


def summarize_records(records):
    """One summary block per experiment kind."""
    blocks = {}
    for rec in records:
        blocks.setdefault(_kind_of(rec), []).append(rec)
    summary = {}
    for kind, recs in blocks.items():
        s = {"records": len(recs)}
        if kind in ("barrier", "lclt"):
            kcol = "kernel_lclt" if kind == "lclt" else "kernel_upper_a"
            ratios = [r["estimate"] / r[kcol] for r in recs
                      if isinstance(r.get(kcol), (int, float)) and r[kcol] > 0]
            if ratios:
                s.update(c_hat_max=max(ratios), c_hat_min=min(ratios))
        elif kind == "cover-rayknight":
            right = [r for r in recs if r.get("side") == "right" and r["uncovered_prob"] > 0]
            if len(right) >= 3:
                fit = fit_envelope([r["x_eff"] for r in right],
                                   [r["uncovered_prob"] for r in right], "x_exp_decay",
                                   upper=[1 - r["ci_low"] for r in right],
                                   stderr=[r["stderr"] for r in right])
                s.update(c_hat=fit.constant, slope=fit.slope, slope_stderr=fit.slope_stderr,
                         slope_ci=[fit.slope - 3 * fit.slope_stderr,
                                   fit.slope + 3 * fit.slope_stderr],
                         max_violation=fit.max_violation)
        elif kind in ("validate", "chain-check"):
            passed = sum(bool(r.get("passed")) for r in recs)
            s.update(passed=passed, failed=len(recs) - passed)
        summary[kind] = s
    return summary


def emit_summary(path, out=None):
    out = sys.stdout if out is None else out
    records = read_results(path)
    summary = summarize_records(records)
    for kind, s in summary.items():
        out.write(f"== {kind} ==\n")
        for k, v in s.items():
            out.write(f"  {k:>14}: {v}\n")
    out.write(dumps_record({"schema_version": SCHEMA_VERSION, "experiment": "summary",
                            "source": os.path.basename(path), "summary": summary}) + "\n")
    return summary


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="gwbarrier", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("kind", choices=KINDS)
    r.add_argument("--config", help="JSON config file")
    r.add_argument("--seed", type=int, help="master seed (overrides config)")
    r.add_argument("--workers", type=int, help="worker threads")
    r.add_argument("--out", help="output path")
    r.add_argument("--format", choices=FORMATS)
    r.add_argument("--replicas", type=int, help="replicas per grid point")
    r.add_argument("--quick", action="store_true", help="reduced replica counts")
    s = sub.add_parser("summary", help="summarize a results file")
    s.add_argument("results")
    return p


def config_from_args(args):
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = ExperimentConfig.from_json(fh.read())
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        if cfg.kind != args.kind:
            raise ConfigError(f"field 'kind': config says {cfg.kind!r}, command says "
                              f"{args.kind!r}")
    else:
        cfg = ExperimentConfig(kind=args.kind)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.replicas is not None:
        cfg.replicas = args.replicas
    if args.format is not None:
        cfg.format = args.format
    if args.out is not None:
        cfg.output = args.out
    if args.quick:
        cfg.quick = True
        if args.replicas is None and cfg.kind != "validate":
            cfg.replicas = min(cfg.replicas, 10 ** 4)
    if args.out is None and args.format is not None and not args.config:
        cfg.output = f"results.{cfg.format}"
    return cfg.validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "summary":
            emit_summary(args.results)
            return EXIT_OK
        cfg = config_from_args(args)
        status, _ = run(cfg)
        return status
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceError, OSError, MemoryError) as e:
        print(f"resource error: {e}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
