"""KeyTrace extraction, replay and token serialization.

A KeyTrace is what survives of a trail once every backtracked detour is cut
away: scanning left to right, decisions and implied assignments are appended,
a backjump to level h trims the suffix above h and appends the asserted
literal as a decision at level h, and a restart trims to level 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .cnf import Formula
from .events import (ASSIGN, BACKTRACK, DECISION, KEYTRACE_HEADER, TrailEvent,
                     format_events, parse_events)

MARK_CNF = "[CNF]"
MARK_SEP = "[SEP]"
MARK_D = "[D]"
CLAUSE_END = 0
MARKERS = (MARK_CNF, MARK_SEP, MARK_D)


@dataclass(frozen=True)
class KeyTrace:
    events: tuple = ()

    def __post_init__(self):
        events = tuple(TrailEvent(*ev) for ev in self.events)
        for ev in events:
            if ev.tag not in (DECISION, ASSIGN):
                raise ValueError(f"KeyTrace cannot hold {ev.tag} events")
        object.__setattr__(self, "events", events)

    def __len__(self):
        return len(self.events)

    def decisions(self) -> list:
        return [ev.literal for ev in self.events if ev.tag == DECISION]

    def blocks(self) -> list:
        """[(decision literal, [implied literals...]), ...].

        Implied literals before the first decision (level-0 facts) are not part
        of any block and are dropped here, as in the token encoding.
        """
        out: list = []
        for ev in self.events:
            if ev.tag == DECISION:
                out.append((ev.literal, []))
            elif out:
                out[-1][1].append(ev.literal)
        return [(d, tuple(a)) for d, a in out]

    def prefix(self, length: int) -> "KeyTrace":
        return KeyTrace(self.events[:length])

    def literals(self) -> list:
        return [ev.literal for ev in self.events]


def trim(events: list, level: int) -> None:
    """Drop, in place, the maximal suffix of events whose level exceeds ``level``."""
    while events and events[-1][2] > level:
        events.pop()


def extract_keytrace(trail) -> KeyTrace:
    """Collapse a trail (a Trail or any sequence of (tag, literal, level))."""
    events = trail.events if hasattr(trail, "events") else trail
    kept: list = []
    for tag, lit, level in events:
        if tag == DECISION or tag == ASSIGN:
            kept.append((tag, lit, level))
        elif tag == BACKTRACK:
            trim(kept, level)
            if lit != 0:
                kept.append((DECISION, lit, level))
        else:
            raise ValueError(f"unknown event tag {tag!r}")
    return KeyTrace(tuple(kept))


def format_keytrace(ktrace: KeyTrace, num_vars: int) -> str:
    return format_events(ktrace.events, num_vars, header=KEYTRACE_HEADER)


def parse_keytrace(text: str) -> tuple:
    """Returns (num_vars, KeyTrace)."""
    _, n, events = parse_events(text, allowed_tags=(DECISION, ASSIGN))
    return n, KeyTrace(events)


def load_keytrace(path) -> tuple:
    with open(path) as fh:
        return parse_keytrace(fh.read())


def save_keytrace(ktrace: KeyTrace, num_vars: int, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_keytrace(ktrace, num_vars))


# -- serialization -------------------------------------------------------------

def cnf_tokens(formula: Formula) -> list:
    tokens: list = [MARK_CNF]
    for clause in formula.clauses:
        tokens.extend(clause)
        tokens.append(CLAUSE_END)
    return tokens


def encode_trace(ktrace: KeyTrace) -> list:
    tokens: list = []
    for d, implied in ktrace.blocks():
        tokens.append(MARK_D)
        tokens.append(d)
        tokens.extend(implied)
    return tokens


def serialize(formula: Formula, ktrace: KeyTrace, cnf_prefix: Optional[list] = None) -> list:
    """Token stream [CNF] clauses... [SEP] ([D] d a...)* [D].

    ``cnf_prefix`` may pass a cached ``cnf_tokens(formula)`` list.
    """
    n = formula.num_vars
    for lit in ktrace.literals():
        if lit == 0 or abs(lit) > n:
            raise ValueError(f"literal {lit} out of range for n={n}")
    head = cnf_prefix if cnf_prefix is not None else cnf_tokens(formula)
    return head + [MARK_SEP] + encode_trace(ktrace) + [MARK_D]


def tokens_to_text(tokens: Iterable) -> str:
    return " ".join(str(t) for t in tokens)


def text_to_tokens(text: str) -> list:
    out: list = []
    for field in text.split():
        out.append(field if field in MARKERS else int(field))
    return out


class TokenError(ValueError):
    pass


def deserialize(tokens: Sequence) -> tuple:
    """Inverse of :func:`serialize`: returns (clauses, blocks)."""
    tokens = list(tokens)
    if not tokens or tokens[0] != MARK_CNF:
        raise TokenError("stream must start with [CNF]")
    if tokens[-1] != MARK_D:
        raise TokenError("stream must end with [D]")
    if tokens.count(MARK_SEP) != 1:
        raise TokenError("stream must contain exactly one [SEP]")
    sep = tokens.index(MARK_SEP)
    clauses: list = []
    current: list = []
    for tok in tokens[1:sep]:
        if tok in MARKERS:
            raise TokenError(f"marker {tok} inside CNF segment")
        if tok == CLAUSE_END:
            clauses.append(tuple(current))
            current = []
        else:
            current.append(tok)
    if current:
        raise TokenError("unterminated clause in CNF segment")
    body = tokens[sep + 1:-1]
    blocks: list = []
    i = 0
    while i < len(body):
        if body[i] != MARK_D or i + 1 >= len(body) or body[i + 1] in MARKERS:
            raise TokenError("decision block must be [D] followed by a literal")
        d = body[i + 1]
        i += 2
        implied = []
        while i < len(body) and body[i] != MARK_D:
            if body[i] in MARKERS or body[i] == 0:
                raise TokenError(f"unexpected token {body[i]!r} in decision block")
            implied.append(body[i])
            i += 1
        blocks.append((d, tuple(implied)))
    return clauses, blocks


def keytrace_from_blocks(blocks: Sequence) -> KeyTrace:
    """Rebuild a KeyTrace from blocks; block i gets level i (1-based)."""
    events = []
    for lvl, (d, implied) in enumerate(blocks, 1):
        events.append(TrailEvent(DECISION, d, lvl))
        events.extend(TrailEvent(ASSIGN, a, lvl) for a in implied)
    return KeyTrace(tuple(events))


# -- replay and probes ---------------------------------------------------------

class ReplayPolicy:
    """Positional expert: the i-th query gets the i-th KeyTrace decision.

    Used by :func:`replay`; each query consumes one position whether or not the
    solver accepts the proposal.
    """

    name = "replay"

    def __init__(self, ktrace: KeyTrace):
        self.decisions = ktrace.decisions()
        self.cursor = 0

    def query(self, formula: Formula, prefix: KeyTrace) -> Optional[int]:
        if self.cursor >= len(self.decisions):
            return None
        lit = self.decisions[self.cursor]
        self.cursor += 1
        return lit


def replay(formula: Formula, ktrace: KeyTrace, config=None) -> tuple:
    """Solve with the KeyTrace decisions forced first, then VSIDS.  -> (RunStats, Trail)"""
    from .policy import Budget
    from .solver import solve

    budget = Budget(len(ktrace.decisions()))
    return solve(formula, config, policy=ReplayPolicy(ktrace), budget=budget)


@dataclass(frozen=True)
class ProbeSample:
    formula: Formula
    prefix: KeyTrace
    target: int


def harvest_probes(formula: Formula, trail) -> list:
    """One probe per decision of the final KeyTrace: (formula, events before it, decision)."""
    kt = extract_keytrace(trail)
    return [ProbeSample(formula, kt.prefix(j), ev.literal)
            for j, ev in enumerate(kt.events) if ev.tag == DECISION]
