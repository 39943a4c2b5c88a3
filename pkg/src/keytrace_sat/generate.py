"""Planted random 3-SAT instances and variable relabelling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .cnf import Assignment, Formula
from .rng import SplitMix64

# Variable-count buckets used for training and test sets: name -> (n_min, n_max).
BUCKETS = {
    "5-15": (5, 15),
    "16-30": (16, 30),
    "31-60": (31, 60),
    "61-100": (61, 100),
    "50": (50, 50),
    "100": (100, 100),
}


def bucket_of(num_vars: int) -> Optional[str]:
    """First range bucket containing ``num_vars`` (fixed-size buckets are never returned)."""
    for name in ("5-15", "16-30", "31-60", "61-100"):
        lo, hi = BUCKETS[name]
        if lo <= num_vars <= hi:
            return name
    return None


@dataclass(frozen=True)
class GenSpec:
    num_vars: int
    ratio_min: float = 4.1
    ratio_max: float = 4.4
    seed: int = 0

    def __post_init__(self):
        if self.num_vars < 3:
            raise ValueError("a 3-clause needs at least 3 variables")
        if not 0 < self.ratio_min <= self.ratio_max:
            raise ValueError("need 0 < ratio_min <= ratio_max")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate_planted(spec: GenSpec) -> tuple:
    """Draw (formula, planted assignment); the formula is satisfied by the plant.

    Draw order from SplitMix64(seed): one bit per variable for the plant, one
    uniform for the ratio, then per clause three distinct variables (``below``)
    and three sign bits.  A clause falsified by the plant is redrawn whole.
    """
    rng = SplitMix64(spec.seed)
    n = spec.num_vars
    planted = tuple(rng.bit() for _ in range(n))
    ratio = spec.ratio_min + (spec.ratio_max - spec.ratio_min) * rng.uniform()
    m = round_half_up(ratio * n)
    clauses = []
    while len(clauses) < m:
        vs: list = []
        while len(vs) < 3:
            v = rng.below(n) + 1
            if v not in vs:
                vs.append(v)
        clause = tuple(v if rng.bit() else -v for v in vs)
        if any(planted[abs(lit) - 1] == (lit > 0) for lit in clause):
            clauses.append(clause)
    return Formula(n, tuple(clauses)), Assignment(planted)


@dataclass(frozen=True)
class VariablePermutation:
    """Bijection on 1..n; ``mapping[j-1]`` is the image of variable j."""

    mapping: tuple

    def __post_init__(self):
        n = len(self.mapping)
        if sorted(self.mapping) != list(range(1, n + 1)):
            raise ValueError("mapping is not a bijection on 1..n")

    @property
    def size(self) -> int:
        return len(self.mapping)

    @classmethod
    def identity(cls, n: int) -> "VariablePermutation":
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def swap(cls, n: int, a: int, b: int) -> "VariablePermutation":
        m = list(range(1, n + 1))
        m[a - 1], m[b - 1] = b, a
        return cls(tuple(m))

    @classmethod
    def random(cls, n: int, rng: SplitMix64) -> "VariablePermutation":
        m = list(range(1, n + 1))
        rng.shuffle(m)
        return cls(tuple(m))

    def apply(self, lit: int) -> int:
        image = self.mapping[abs(lit) - 1]
        return image if lit > 0 else -image

    def inverse(self) -> "VariablePermutation":
        inv = [0] * len(self.mapping)
        for j, image in enumerate(self.mapping, 1):
            inv[image - 1] = j
        return VariablePermutation(tuple(inv))


def permute(formula: Formula, perm: VariablePermutation) -> Formula:
    if perm.size != formula.num_vars:
        raise ValueError(f"permutation over {perm.size} variables, formula has {formula.num_vars}")
    return Formula(
        formula.num_vars,
        tuple(tuple(perm.apply(lit) for lit in c) for c in formula.clauses),
    )


def permute_assignment(assignment: Assignment, perm: VariablePermutation) -> Assignment:
    if perm.size != assignment.num_vars:
        raise ValueError("permutation domain mismatch")
    return Assignment.from_literals(assignment.num_vars, [perm.apply(l) for l in assignment.literals()])


def permute_trace(ktrace, perm: VariablePermutation):
    """Relabel every literal of a KeyTrace (or Trail); tags and levels are kept."""
    for ev in ktrace.events:
        if ev.literal and abs(ev.literal) > perm.size:
            raise ValueError(f"literal {ev.literal} outside permutation domain 1..{perm.size}")
    events = tuple(ev._replace(literal=perm.apply(ev.literal) if ev.literal else 0) for ev in ktrace.events)
    return type(ktrace)(events)


def instance_seed(base_seed: int, index: int) -> int:
    return (base_seed + index) & ((1 << 64) - 1)


def generate_instance(base_seed: int, index: int, n_min: int, n_max: int,
                      ratio_min: float = 4.1, ratio_max: float = 4.4) -> tuple:
    """Instance ``index`` of a dataset: returns (GenSpec, formula, planted).

    The per-instance stream SplitMix64(base_seed + index) first draws n, then
    the seed handed to :func:`generate_planted`.
    """
    rng = SplitMix64(instance_seed(base_seed, index))
    n = n_min + rng.below(n_max - n_min + 1)
    spec = GenSpec(n, ratio_min, ratio_max, rng.next())
    formula, planted = generate_planted(spec)
    return spec, formula, planted


def write_dataset(out_dir, count: int, n_min: int, n_max: int, seed: int,
                  ratio_min: float = 4.1, ratio_max: float = 4.4) -> dict:
    """Write ``count`` numbered .cnf files plus manifest.json; returns the manifest."""
    import json
    from pathlib import Path

    from .cnf import write_dimacs

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(count - 1)))
    instances = []
    for i in range(count):
        spec, formula, planted = generate_instance(seed, i, n_min, n_max, ratio_min, ratio_max)
        name = f"{i:0{width}d}.cnf"
        (out / name).write_bytes(write_dimacs(formula))
        instances.append({"file": name, "index": i, "instance_seed": instance_seed(seed, i),
                          "spec_seed": spec.seed, "n": spec.num_vars, "m": formula.num_clauses,
                          "planted": planted.literals()})
    manifest = {"generator": "planted-3sat splitmix64 v1", "seed": seed, "count": count,
                "n_min": n_min, "n_max": n_max, "ratio_min": ratio_min, "ratio_max": ratio_max,
                "instances": instances}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest
