"""Command-line entry point: ``keytrace-sat <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .cnf import read_dimacs
from .events import load_trail, save_trail
from .generate import bucket_of, write_dataset
from .keytrace import (ProbeSample, deserialize, encode_trace, extract_keytrace, harvest_probes,
                       keytrace_from_blocks, load_keytrace, replay, save_keytrace,
                       text_to_tokens, tokens_to_text)
from .policy import BCConfig, BCModel, BCPolicy, Budget, ExpertPolicy, train_bc
from .solver import SolverConfig, solve


def _config(args) -> SolverConfig:
    return SolverConfig(seed=args.seed) if getattr(args, "seed", None) is not None else SolverConfig()


def _policy_from_arg(text: str):
    kind, _, arg = text.partition(":")
    if kind == "vsids":
        return None
    if kind == "expert":
        return ExpertPolicy(load_keytrace(arg)[1])
    if kind == "bc":
        return BCPolicy(BCModel.load(arg))
    if kind == "extern":
        from .extern import ExternPolicy

        return ExternPolicy(arg)
    raise SystemExit(f"unknown policy {text!r}")


def cmd_gen(args) -> int:
    manifest = write_dataset(args.out_dir, args.count, args.n_min, args.n_max, args.seed,
                             args.ratio_min, args.ratio_max)
    print(f"wrote {manifest['count']} instances to {args.out_dir}")
    return 0


def cmd_solve(args) -> int:
    formula = read_dimacs(args.cnf)
    policy = _policy_from_arg(args.policy)
    budget = Budget.parse(args.budget, args.schedule) if policy is not None else None
    try:
        stats, trail = solve(formula, _config(args), policy=policy, budget=budget)
    finally:
        if hasattr(policy, "close"):
            policy.close()
    if args.trail_out:
        save_trail(trail, args.trail_out)
    if args.stats_out:
        with open(args.stats_out, "w") as fh:
            json.dump(stats.to_dict(), fh, indent=2)
            fh.write("\n")
    print(f"s {'SATISFIABLE' if stats.outcome == 'SAT' else 'UNSATISFIABLE'}")
    if stats.model is not None:
        print("v " + " ".join(str(l) for l in stats.model.literals()) + " 0")
    print(f"c decisions={stats.decisions} propagations={stats.propagations} "
          f"conflicts={stats.conflicts} restarts={stats.restarts} queries={stats.queries}")
    return 10 if stats.outcome == "SAT" else 20


def cmd_extract(args) -> int:
    trail = load_trail(args.trail)
    save_keytrace(extract_keytrace(trail), trail.num_vars, args.output)
    return 0


def cmd_replay(args) -> int:
    formula = read_dimacs(args.cnf)
    _, kt = load_keytrace(args.ktrace)
    stats, trail = replay(formula, kt, _config(args))
    if args.stats_out:
        with open(args.stats_out, "w") as fh:
            json.dump(stats.to_dict(), fh, indent=2)
            fh.write("\n")
    print(f"c replay outcome={stats.outcome} decisions={stats.decisions} "
          f"propagations={stats.propagations} conflicts={stats.conflicts}")
    return 0


def cmd_probes(args) -> int:
    count = 0
    with open(args.out, "w") as out:
        for path in harness.list_dataset(args.cnf_dir):
            formula = read_dimacs(path)
            stats, trail = solve(formula, _config(args))
            for probe in harvest_probes(formula, trail):
                rec = {"cnf_path": str(path), "prefix_tokens": tokens_to_text(encode_trace(probe.prefix)),
                       "target": probe.target, "n": formula.num_vars,
                       "bucket": bucket_of(formula.num_vars), "verdict": stats.outcome,
                       "unsat": stats.outcome == "UNSAT"}
                out.write(json.dumps(rec) + "\n")
                count += 1
    print(f"wrote {count} probes to {args.out}")
    return 0


def load_probes(path, include_unsat: bool = False) -> list:
    """Read a probes.jsonl file back into ProbeSample objects (CNFs are re-read)."""
    cache: dict = {}
    probes = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("unsat") and not include_unsat:
                continue
            cnf = rec["cnf_path"]
            if cnf not in cache:
                cache[cnf] = read_dimacs(cnf)
            formula = cache[cnf]
            tokens = ["[CNF]", "[SEP]"] + text_to_tokens(rec["prefix_tokens"]) + ["[D]"]
            _, blocks = deserialize(tokens)
            probes.append(ProbeSample(formula, keytrace_from_blocks(blocks), int(rec["target"])))
    return probes


def cmd_train_bc(args) -> int:
    probes = load_probes(args.probes, args.include_unsat)
    cfg = BCConfig(order=args.order, digest=args.digest, smoothing_alpha=args.alpha,
                   permutations_per_sample=args.perms,
                   curriculum=tuple(args.curriculum.split(",")) if args.curriculum else (),
                   seed=args.seed)
    model = train_bc(probes, cfg)
    model.save(args.out)
    print(f"trained on {len(probes)} probes: contexts={len(model.table)} "
          f"train_nll={model.train_nll:.4f} accuracy={model.accuracy(probes):.4f}")
    return 0


def cmd_eval(args) -> int:
    report = harness.run_eval(args.dataset, args.method, args.budget, args.schedule,
                              _config(args), args.workers)
    harness.write_json(report.to_json(), args.out)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(timing=args.csv_timing))
    mrpp = "n/a" if report.mrpp is None else f"{float(report.mrpp):.4f}"
    print(f"method={report.method} instances={len(report.per_instance)} "
          f"mrpp={mrpp} win_rate={float(report.win_rate):.4f}")
    return 0


def cmd_bench_breakdown(args) -> int:
    out = harness.bench_breakdown(args.dataset, _config(args), args.workers)
    harness.write_json(out, args.out)
    for name in ("propagate", "analyze", "decide"):
        row = out[name]
        print(f"{name:10s} mean={row['mean_ms']:.3f}ms median={row['median_ms']:.3f}ms "
              f"share={100 * row['share_of_mean']:.2f}%")
    return 0


def cmd_bench_replay(args) -> int:
    out = harness.bench_replay(args.dataset, _config(args), args.workers)
    harness.write_json(out, args.out)
    for key in ("conflicts", "decisions", "propagations"):
        row = out[key]
        print(f"{key:12s} original={row['original_mean']:.2f} replay={row['replay_mean']:.2f} "
              f"share={100 * row['share_of_means']:.2f}% median_ratio={row['median_ratio']:.4f}")
    return 0


def cmd_schedule(args) -> int:
    rows = harness.schedule_experiment(args.dataset, args.method, budget=1,
                                       config=_config(args), workers=args.workers)
    out = [{k: v for k, v in r.items() if k != "queries"} | {"total_queries": sum(r["queries"])}
           for r in rows]
    if args.out:
        harness.write_json(out, args.out)
    for r in out:
        mrpp = "n/a" if r["mrpp"] is None else f"{float(r['mrpp']):.4f}"
        print(f"{r['variant']:14s} mrpp={mrpp} W={float(r['win_rate']):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="keytrace-sat", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate planted 3-SAT instances")
    p.add_argument("--n-min", type=int, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--ratio-min", type=float, default=4.1)
    p.add_argument("--ratio-max", type=float, default=4.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve one DIMACS file")
    p.add_argument("cnf")
    p.add_argument("--policy", default="vsids", help="vsids | expert:FILE | bc:FILE | extern:CMD")
    p.add_argument("--budget", type=int, default=3)
    p.add_argument("--schedule", default="front", help="front | after:K")
    p.add_argument("--seed", type=int)
    p.add_argument("--trail-out")
    p.add_argument("--stats-out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("extract", help="collapse a trail file into a KeyTrace")
    p.add_argument("trail")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("replay", help="replay a KeyTrace on its formula")
    p.add_argument("cnf")
    p.add_argument("ktrace")
    p.add_argument("--seed", type=int)
    p.add_argument("--stats-out")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("probes", help="harvest decision probes from a directory of CNFs")
    p.add_argument("cnf_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_probes)

    p = sub.add_parser("train-bc", help="train the count-based behaviour-cloning model")
    p.add_argument("--probes", required=True)
    p.add_argument("--order", type=int, default=24)
    p.add_argument("--digest", type=int, default=16)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--perms", type=int, default=1)
    p.add_argument("--curriculum", default="", help="comma-separated bucket names, e.g. 5-15,16-30")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--include-unsat", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_bc)

    p = sub.add_parser("eval", help="compare a method against plain VSIDS")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", default="vsids", help="vsids | expert | bc:FILE | extern:CMD")
    p.add_argument("--budget", type=int, default=3)
    p.add_argument("--schedule", default="front", help="front | after:K")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--csv-timing", action="store_true", help="fill the wall-clock CSV columns")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench-breakdown", help="propagate/analyze/decide time shares")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_breakdown)

    p = sub.add_parser("bench-replay", help="original vs KeyTrace-replay event counts")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_replay)

    p = sub.add_parser("schedule", help="one-call schedule comparison (first vs after 3)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", default="expert")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_schedule)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
