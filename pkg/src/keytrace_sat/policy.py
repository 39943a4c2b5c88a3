"""Branching policies and the budgeted query hook used inside the solver."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

from .cnf import Formula
from .generate import VariablePermutation, bucket_of, permute, permute_trace
from .keytrace import (MARK_CNF, MARK_D, MARK_SEP, CLAUSE_END, KeyTrace, ProbeSample,
                       cnf_tokens, extract_keytrace, serialize, tokens_to_text)
from .rng import SplitMix64


class BranchingPolicy(Protocol):
    name: str

    def query(self, formula: Formula, prefix: KeyTrace) -> Optional[int]:
        """Propose a signed literal for the next decision, or None to pass."""


class VSIDSPolicy:
    """Never proposes anything, so every branch falls back to VSIDS."""

    name = "vsids"

    def query(self, formula, prefix):
        return None


FRONT_LOADED = "front"


@dataclass
class Budget:
    """Query budget.  ``skip`` is the number of leading decisions left to VSIDS
    (0 = front-loaded; 3 = one model call after three VSIDS decisions, etc.)."""

    total: int
    skip: int = 0
    remaining: int = field(default=-1)

    def __post_init__(self):
        if self.total < 0 or self.skip < 0:
            raise ValueError("budget and skip must be non-negative")
        if self.remaining < 0:
            self.remaining = self.total
        if self.remaining > self.total:
            raise ValueError("remaining exceeds total")

    @classmethod
    def parse(cls, total: int, schedule: str) -> "Budget":
        """``schedule`` is ``front`` or ``after:K``."""
        if schedule == FRONT_LOADED:
            return cls(total)
        if schedule.startswith("after:"):
            return cls(total, skip=int(schedule.split(":", 1)[1]))
        raise ValueError(f"unknown schedule {schedule!r}")

    def admits(self, decision_index: int) -> bool:
        """``decision_index`` counts the run's decisions from 1."""
        return self.remaining > 0 and decision_index > self.skip

    def consume(self) -> None:
        if self.remaining <= 0:
            raise RuntimeError("budget exhausted")
        self.remaining -= 1


def is_legal(lit, num_vars: int, is_assigned) -> bool:
    return isinstance(lit, int) and not isinstance(lit, bool) and 1 <= abs(lit) <= num_vars \
        and not is_assigned(abs(lit))


def budgeted_decide(formula: Formula, solver, policy: BranchingPolicy, budget: Budget,
                    fallback=None) -> tuple:
    """One branching step of the online integration.

    Returns (literal, status) with status ``skipped`` (no query), ``accepted``
    or ``rejected``.  The budget is charged before the legality check, so a
    rejected proposal still costs a query.
    """
    fallback = fallback or solver.vsids_pick
    index = solver.stats.decisions + 1
    if not budget.admits(index):
        return fallback(), "skipped"
    budget.consume()
    prefix = extract_keytrace(solver.current_trail())
    lit = policy.query(formula, prefix)
    if lit is not None and is_legal(lit, formula.num_vars, solver.is_assigned):
        return lit, "accepted"
    return fallback(), "rejected"


class PolicyBrancher:
    """Solver hook wrapping a policy and a budget, with query accounting."""

    def __init__(self, formula: Formula, policy: BranchingPolicy, budget: Optional[Budget] = None):
        self.formula = formula
        self.policy = policy
        self.budget = budget if budget is not None else Budget(0)
        self.queries = 0
        self.accepted = 0

    def __call__(self, solver) -> int:
        lit, status = budgeted_decide(self.formula, solver, self.policy, self.budget)
        if status != "skipped":
            self.queries += 1
            if status == "accepted":
                self.accepted += 1
        return lit


class ExpertPolicy:
    """Oracle backed by a KeyTrace from an earlier run on the same formula.

    Stateless: finds the longest common prefix of the queried decisions and
    the expert's decisions and proposes the expert decision right after it,
    or passes when the expert has none left.  After a divergence the proposal
    may already be assigned, in which case the solver's legality check rejects it.
    """

    name = "expert"

    def __init__(self, ktrace: KeyTrace):
        self.decisions = ktrace.decisions()

    def query(self, formula: Formula, prefix: KeyTrace) -> Optional[int]:
        j = 0
        for mine, theirs in zip(prefix.decisions(), self.decisions):
            if mine != theirs:
                break
            j += 1
        return self.decisions[j] if j < len(self.decisions) else None


def expert_policy(ktrace: KeyTrace) -> ExpertPolicy:
    return ExpertPolicy(ktrace)


# -- behaviour cloning -----------------------------------------------------------

MODEL_FORMAT = "bcmodel v1"


@dataclass(frozen=True)
class BCConfig:
    order: int = 24
    digest: int = 16
    smoothing_alpha: float = 1.0
    permutations_per_sample: int = 1
    curriculum: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.order < 1 or self.digest < 0:
            raise ValueError("order must be >= 1 and digest >= 0")
        if self.smoothing_alpha <= 0:
            raise ValueError("smoothing_alpha must be positive")


def context_key(tokens: Sequence, order: int, digest: int) -> str:
    """CNF digest (first ``digest`` tokens after [CNF]) plus the last ``order`` tokens."""
    sep = tokens.index(MARK_SEP)
    head = tokens[1:1 + min(digest, sep - 1)]
    return tokens_to_text(head) + " | " + tokens_to_text(tokens[-order:])


def vocabulary(max_vars: int) -> list:
    vocab: list = [MARK_CNF, MARK_SEP, MARK_D, str(CLAUSE_END)]
    for j in range(1, max_vars + 1):
        vocab.extend((str(j), str(-j)))
    return vocab


@dataclass
class BCModel:
    """Add-alpha smoothed count table over (context window -> next literal)."""

    order: int
    digest: int
    alpha: float
    max_vars: int
    table: dict
    train_nll: float = float("nan")

    @property
    def vocab(self) -> list:
        return vocabulary(self.max_vars)

    @property
    def vocab_size(self) -> int:
        return 4 + 2 * self.max_vars

    def key(self, formula: Formula, prefix: KeyTrace, cnf_prefix=None) -> str:
        return context_key(serialize(formula, prefix, cnf_prefix), self.order, self.digest)

    def prob(self, key: str, target: int) -> float:
        counts = self.table.get(key, {})
        total = sum(counts.values())
        return (counts.get(target, 0) + self.alpha) / (total + self.alpha * self.vocab_size)

    def distribution(self, key: str) -> dict:
        """Smoothed next-token distribution over the full vocabulary."""
        counts = self.table.get(key, {})
        total = sum(counts.values())
        denom = total + self.alpha * self.vocab_size
        dist = {tok: self.alpha / denom for tok in self.vocab}
        for lit, c in counts.items():
            dist[str(lit)] = (c + self.alpha) / denom
        return dist

    def best(self, key: str, num_vars: int, blocked=frozenset()) -> Optional[int]:
        """Masked argmax over literals of unblocked variables in 1..num_vars.

        Ties go to the lowest variable, positive polarity first.  Returns None
        when no candidate beats the smoothing floor.
        """
        counts = self.table.get(key)
        if not counts:
            return None
        best_lit, best_count = None, 0
        for lit, c in counts.items():
            v = abs(lit)
            if v > num_vars or v in blocked or c <= 0:
                continue
            if c > best_count or (c == best_count and (v, lit < 0) < (abs(best_lit), best_lit < 0)):
                best_lit, best_count = lit, c
        return best_lit

    def nll(self, probes: Sequence[ProbeSample]) -> float:
        total = 0.0
        for p in probes:
            total -= math.log(self.prob(self.key(p.formula, p.prefix), p.target))
        return total / len(probes)

    def accuracy(self, probes: Sequence[ProbeSample], masked: bool = False) -> float:
        hits = 0
        for p in probes:
            blocked = frozenset(abs(l) for l in p.prefix.literals()) if masked else frozenset()
            if self.best(self.key(p.formula, p.prefix), p.formula.num_vars, blocked) == p.target:
                hits += 1
        return hits / len(probes)

    def mass(self) -> int:
        return sum(sum(c.values()) for c in self.table.values())

    def to_json(self) -> dict:
        entries = [{"context": k, "counts": {str(l): c for l, c in sorted(v.items())}}
                   for k, v in sorted(self.table.items())]
        return {"format": MODEL_FORMAT, "order": self.order, "digest": self.digest,
                "alpha": self.alpha, "max_vars": self.max_vars, "vocab": self.vocab,
                "train_nll": self.train_nll, "entries": entries}

    @classmethod
    def from_json(cls, data: dict) -> "BCModel":
        if data.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a {MODEL_FORMAT} file")
        table = {e["context"]: {int(l): int(c) for l, c in e["counts"].items()}
                 for e in data["entries"]}
        return cls(int(data["order"]), int(data["digest"]), float(data["alpha"]),
                   int(data["max_vars"]), table, float(data.get("train_nll", float("nan"))))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "BCModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _curriculum_order(probes: Sequence[ProbeSample], curriculum: Sequence[str]) -> list:
    if not curriculum:
        return list(probes)
    rank = {name: i for i, name in enumerate(curriculum)}
    return sorted(probes, key=lambda p: rank.get(bucket_of(p.formula.num_vars), len(rank)))


def augment(probe: ProbeSample, perm: VariablePermutation) -> ProbeSample:
    return ProbeSample(permute(probe.formula, perm), permute_trace(probe.prefix, perm),
                       perm.apply(probe.target))


def train_bc(probes: Sequence[ProbeSample], cfg: BCConfig = BCConfig()) -> BCModel:
    """Fit the count model; each probe contributes ``permutations_per_sample``
    copies, the first unpermuted and the rest under random relabellings."""
    if not probes:
        raise ValueError("cannot train on an empty probe set")
    rng = SplitMix64(cfg.seed)
    copies = max(1, cfg.permutations_per_sample)
    table: dict = {}
    max_vars = 0
    cnf_cache: dict = {}
    for probe in _curriculum_order(probes, cfg.curriculum):
        n = probe.formula.num_vars
        max_vars = max(max_vars, n)
        for c in range(copies):
            sample = probe if c == 0 else augment(probe, VariablePermutation.random(n, rng))
            head = cnf_cache.get(id(sample.formula)) if c == 0 else None
            if head is None:
                head = cnf_tokens(sample.formula)
                if c == 0:
                    cnf_cache[id(sample.formula)] = head
            key = context_key(serialize(sample.formula, sample.prefix, head), cfg.order, cfg.digest)
            counts = table.setdefault(key, {})
            counts[sample.target] = counts.get(sample.target, 0) + 1
    model = BCModel(cfg.order, cfg.digest, cfg.smoothing_alpha, max_vars, table)
    model.train_nll = model.nll(probes)
    return model


class BCPolicy:
    name = "bc"

    def __init__(self, model: BCModel):
        self.model = model
        self._cnf_cache: tuple = (None, None)

    def query(self, formula: Formula, prefix: KeyTrace) -> Optional[int]:
        cached_formula, head = self._cnf_cache
        if cached_formula is not formula:
            head = cnf_tokens(formula)
            self._cnf_cache = (formula, head)
        key = self.model.key(formula, prefix, head)
        blocked = frozenset(abs(l) for l in prefix.literals())
        return self.model.best(key, formula.num_vars, blocked)


def bc_policy(model: BCModel) -> BCPolicy:
    return BCPolicy(model)
