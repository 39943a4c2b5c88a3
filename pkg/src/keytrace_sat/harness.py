"""Dataset runner, propagation metrics and instrumentation reports."""
from __future__ import annotations

import csv
import io
import json
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .cnf import read_dimacs
from .keytrace import extract_keytrace, replay
from .policy import BCModel, BCPolicy, Budget, ExpertPolicy, VSIDSPolicy
from .solver import SolverConfig, solve

DEFAULT_DELTA = Fraction(1, 100)

CSV_COLUMNS = ["id", "n", "m", "verdict", "p_base", "p_method", "conf_base", "conf_method",
               "dec_base", "dec_method", "wall_base", "wall_method"]


def _ratio(p, p_base) -> Fraction:
    return Fraction(p) / Fraction(p_base)


def mrpp(pairs: Sequence) -> Fraction:
    """Median of p/p' over pairs (p, p') with p' > 0; mean of the middle two for even counts."""
    ratios = sorted(_ratio(p, pb) for p, pb in pairs if pb > 0)
    if not ratios:
        raise ValueError("mrpp needs at least one pair with a positive baseline")
    k = len(ratios)
    mid = k // 2
    if k % 2:
        return ratios[mid]
    return (ratios[mid - 1] + ratios[mid]) / 2


def win_rate(pairs: Sequence, delta=DEFAULT_DELTA) -> Fraction:
    """Fraction of all pairs with p' > 0 and p <= (1 - delta) * p'."""
    if not pairs:
        raise ValueError("win_rate needs at least one pair")
    delta = Fraction(delta) if not isinstance(delta, float) else Fraction(str(delta))
    wins = sum(1 for p, pb in pairs if pb > 0 and Fraction(p) <= (1 - delta) * Fraction(pb))
    return Fraction(wins, len(pairs))


# -- methods ---------------------------------------------------------------------

@dataclass(frozen=True)
class MethodSpec:
    """``vsids``, ``expert`` (KeyTrace of the instance's own baseline run),
    ``bc:<model file>`` or ``extern:<command>``."""

    kind: str
    arg: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        kind, _, arg = text.partition(":")
        if kind not in ("vsids", "expert", "bc", "extern"):
            raise ValueError(f"unknown method {text!r}")
        if kind in ("bc", "extern") and not arg:
            raise ValueError(f"method {kind} needs an argument")
        return cls(kind, arg or None)

    def __str__(self):
        return self.kind if self.arg is None else f"{self.kind}:{self.arg}"


_MODEL_CACHE: dict = {}


def _load_model(path: str) -> BCModel:
    if path not in _MODEL_CACHE:
        _MODEL_CACHE[path] = BCModel.load(path)
    return _MODEL_CACHE[path]


def make_policy(method: MethodSpec, baseline_trail=None):
    if method.kind == "vsids":
        return VSIDSPolicy()
    if method.kind == "expert":
        if method.arg:
            from .keytrace import load_keytrace

            return ExpertPolicy(load_keytrace(method.arg)[1])
        return ExpertPolicy(extract_keytrace(baseline_trail))
    if method.kind == "bc":
        return BCPolicy(_load_model(method.arg))
    from .extern import ExternPolicy

    return ExternPolicy(method.arg)


def list_dataset(dataset) -> list:
    files = sorted(Path(dataset).glob("*.cnf"))
    if not files:
        raise FileNotFoundError(f"no .cnf files in {dataset}")
    return files


@dataclass
class InstanceResult:
    id: str
    n: int
    m: int
    verdict: str
    verdict_method: str
    p_base: int
    p_method: int
    conf_base: int
    conf_method: int
    dec_base: int
    dec_method: int
    wall_base: float
    wall_method: float
    queries: int
    accepted: int
    extern_failures: int
    time_propagate: float
    time_analyze: float
    time_decide: float


def run_instance(path, method: MethodSpec, budget_total: int, schedule: str,
                 config: SolverConfig) -> InstanceResult:
    formula = read_dimacs(path)
    base, base_trail = solve(formula, config)
    if method.kind == "vsids":
        meth, _ = solve(formula, config)
    else:
        policy = make_policy(method, base_trail)
        try:
            meth, _ = solve(formula, config, policy=policy, budget=Budget.parse(budget_total, schedule))
        finally:
            close = getattr(policy, "close", None)
            if close:
                close()
    return InstanceResult(
        Path(path).stem, formula.num_vars, formula.num_clauses, base.outcome, meth.outcome,
        base.propagations, meth.propagations, base.conflicts, meth.conflicts,
        base.decisions, meth.decisions, base.wall_time, meth.wall_time,
        meth.queries, meth.accepted, meth.extern_failures,
        base.time_propagate, base.time_analyze, base.time_decide)


def _run_instance_args(args):
    return run_instance(*args)


def _map(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


@dataclass
class EvalReport:
    method: str
    budget: int
    schedule: str
    delta: Fraction
    per_instance: list
    mrpp: Optional[Fraction]
    win_rate: Fraction
    breakdown: dict = field(default_factory=dict)

    def pairs(self) -> list:
        return [(r.p_method, r.p_base) for r in self.per_instance]

    def to_json(self) -> dict:
        return {
            "method": self.method, "budget": self.budget, "schedule": self.schedule,
            "delta": float(self.delta),
            "mrpp": float(self.mrpp) if self.mrpp is not None else None,
            "mrpp_exact": str(self.mrpp) if self.mrpp is not None else None,
            "win_rate": float(self.win_rate), "win_rate_exact": str(self.win_rate),
            "instances": len(self.per_instance),
            "queries": sum(r.queries for r in self.per_instance),
            "extern_failures": sum(r.extern_failures for r in self.per_instance),
            "breakdown": self.breakdown,
            "per_instance": [asdict(r) for r in self.per_instance],
        }

    def to_csv(self, timing: bool = False) -> str:
        """Per-instance rows.  Wall-clock columns stay empty unless ``timing``,
        which keeps the file byte-identical across reruns."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.per_instance:
            wall = (f"{r.wall_base:.6f}", f"{r.wall_method:.6f}") if timing else ("", "")
            w.writerow([r.id, r.n, r.m, r.verdict, r.p_base, r.p_method, r.conf_base,
                        r.conf_method, r.dec_base, r.dec_method, *wall])
        return buf.getvalue()


def time_shares(results: Sequence) -> dict:
    """Mean time per phase and its share of the three-phase total."""
    if not results:
        return {}
    k = len(results)
    means = {
        "propagate": sum(r.time_propagate for r in results) / k,
        "analyze": sum(r.time_analyze for r in results) / k,
        "decide": sum(r.time_decide for r in results) / k,
    }
    total = sum(means.values())
    return {name: (v / total if total > 0 else 0.0) for name, v in means.items()}


def run_eval(dataset, method, budget: int = 3, schedule: str = "front",
             config: Optional[SolverConfig] = None, workers: int = 1,
             delta=DEFAULT_DELTA) -> EvalReport:
    """Baseline VSIDS vs ``method`` on every ``.cnf`` in ``dataset`` (sorted by name)."""
    if isinstance(method, str):
        method = MethodSpec.parse(method)
    config = config or SolverConfig()
    jobs = [(str(p), method, budget, schedule, config) for p in list_dataset(dataset)]
    results = _map(_run_instance_args, jobs, workers)
    for r in results:
        if r.verdict != r.verdict_method:
            raise RuntimeError(f"{r.id}: verdict changed from {r.verdict} to {r.verdict_method}")
    pairs = [(r.p_method, r.p_base) for r in results]
    try:
        med = mrpp(pairs)
    except ValueError:
        med = None
    return EvalReport(str(method), budget, schedule, Fraction(delta), results, med,
                      win_rate(pairs, delta), time_shares(results))


# -- instrumentation reports ---------------------------------------------------------

def _breakdown_one(args):
    path, config = args
    stats, _ = solve(read_dimacs(path), config)
    return stats.time_propagate, stats.time_analyze, stats.time_decide


def bench_breakdown(dataset, config: Optional[SolverConfig] = None, workers: int = 1) -> dict:
    """Runtime split of plain VSIDS runs into propagate / analyze / decide."""
    config = config or SolverConfig()
    rows = _map(_breakdown_one, [(str(p), config) for p in list_dataset(dataset)], workers)
    out = {}
    names = ("propagate", "analyze", "decide")
    means = [statistics.mean(r[i] for r in rows) for i in range(3)]
    total = sum(means)
    for i, name in enumerate(names):
        out[name] = {
            "mean_ms": means[i] * 1e3,
            "median_ms": statistics.median(r[i] for r in rows) * 1e3,
            "share_of_mean": means[i] / total if total > 0 else 0.0,
        }
    out["instances"] = len(rows)
    return out


def replay_instance(formula, config: SolverConfig) -> dict:
    base, trail = solve(formula, config)
    rep, _ = replay(formula, extract_keytrace(trail), config)
    if rep.outcome != base.outcome:
        raise RuntimeError("replay changed the verdict")
    return {"conflicts": (base.conflicts, rep.conflicts),
            "decisions": (base.decisions, rep.decisions),
            "propagations": (base.propagations, rep.propagations),
            "time_propagate": base.time_propagate, "time_analyze": base.time_analyze,
            "time_decide": base.time_decide}


def _replay_one(args):
    path, config = args
    return replay_instance(read_dimacs(path), config)


def summarize_replays(rows: Sequence[dict]) -> dict:
    """Means of original vs replay counts, plus medians of per-instance ratios."""
    out: dict = {"instances": len(rows)}
    for key in ("conflicts", "decisions", "propagations"):
        orig = statistics.mean(r[key][0] for r in rows)
        rep = statistics.mean(r[key][1] for r in rows)
        out[key] = {
            "original_mean": orig,
            "replay_mean": rep,
            "share_of_means": rep / orig if orig else 0.0,
            "median_ratio": float(statistics.median(
                Fraction(r[key][1], max(1, r[key][0])) for r in rows)),
        }
    return out


def bench_replay(dataset, config: Optional[SolverConfig] = None, workers: int = 1) -> dict:
    config = config or SolverConfig()
    rows = _map(_replay_one, [(str(p), config) for p in list_dataset(dataset)], workers)
    return summarize_replays(rows)


# -- query schedule experiment ----------------------------------------------------------

SCHEDULE_VARIANTS = {"call_at_first": "front", "call_after_3": "after:3"}


def schedule_experiment(dataset, method="expert", variants: Sequence[str] = tuple(SCHEDULE_VARIANTS),
                        budget: int = 1, config: Optional[SolverConfig] = None,
                        workers: int = 1, delta=DEFAULT_DELTA) -> list:
    """One-call schedules compared against the baseline: rows of
    {variant, schedule, mrpp, win_rate, queries, instances}."""
    rows = []
    for name in variants:
        schedule = SCHEDULE_VARIANTS.get(name, name)
        report = run_eval(dataset, method, budget, schedule, config, workers, delta)
        rows.append({
            "variant": name, "schedule": schedule,
            "mrpp": report.mrpp, "win_rate": report.win_rate,
            "queries": [r.queries for r in report.per_instance],
            "instances": len(report.per_instance),
        })
    return rows


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, Fraction):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def cpu_count() -> int:
    return os.cpu_count() or 1
