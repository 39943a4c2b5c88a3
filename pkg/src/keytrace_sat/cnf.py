"""CNF formulas, DIMACS I/O and assignment evaluation.

Literals are plain signed ints: ``j`` is x_j, ``-j`` is not x_j.  Clauses are
tuples of literals and a :class:`Formula` is immutable once built.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union


class DimacsError(ValueError):
    """Malformed DIMACS input.  ``line`` is 1-based, or None for end-of-input."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class Evaluation(enum.Enum):
    SATISFIED = "satisfied"
    FALSIFIED = "falsified"
    UNDETERMINED = "undetermined"


Clause = tuple  # tuple[int, ...]


def normalize_clause(literals: Iterable[int]) -> Clause:
    """Drop repeated literals, keeping the first occurrence order."""
    return tuple(dict.fromkeys(literals))


def is_tautology(clause: Sequence[int]) -> bool:
    lits = set(clause)
    return any(-lit in lits for lit in lits)


@dataclass(frozen=True)
class Formula:
    num_vars: int
    clauses: tuple = field(default=())

    def __post_init__(self):
        if self.num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        clauses = tuple(tuple(int(lit) for lit in c) for c in self.clauses)
        for c in clauses:
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} out of range for n={self.num_vars}")
        object.__setattr__(self, "clauses", clauses)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    @property
    def has_empty_clause(self) -> bool:
        return any(len(c) == 0 for c in self.clauses)

    def simplify(self) -> "Formula":
        """Drop tautological clauses and repeated literals.  Nothing else."""
        kept = tuple(normalize_clause(c) for c in self.clauses if not is_tautology(c))
        return Formula(self.num_vars, kept)


@dataclass(frozen=True)
class Assignment:
    """Partial assignment over variables 1..n; ``values[j-1]`` is True/False/None."""

    values: tuple

    @classmethod
    def empty(cls, num_vars: int) -> "Assignment":
        return cls((None,) * num_vars)

    @classmethod
    def from_literals(cls, num_vars: int, literals: Iterable[int]) -> "Assignment":
        values = [None] * num_vars
        for lit in literals:
            values[abs(lit) - 1] = lit > 0
        return cls(tuple(values))

    @property
    def num_vars(self) -> int:
        return len(self.values)

    def __getitem__(self, var: int) -> Optional[bool]:
        if not 1 <= var <= len(self.values):
            raise IndexError(var)
        return self.values[var - 1]

    def literal_value(self, lit: int) -> Optional[bool]:
        v = self.values[abs(lit) - 1]
        if v is None:
            return None
        return v if lit > 0 else not v

    def literals(self) -> list:
        """Signed literals of the assigned variables, in variable order."""
        return [j if v else -j for j, v in enumerate(self.values, 1) if v is not None]

    def is_complete(self) -> bool:
        return all(v is not None for v in self.values)


def parse_dimacs(data: Union[bytes, str]) -> Formula:
    """Parse DIMACS CNF text.

    Comment lines (``c ...``) may appear anywhere; clauses may span lines.  A
    line starting with ``%`` ends the clause section (SATLIB uf/uuf files).
    Repeated literals inside a clause are dropped; an empty clause is kept.
    """
    if isinstance(data, bytes):
        data = data.decode("ascii", errors="strict")
    header = None
    clauses: list = []
    current: list = []
    current_start = None
    for lineno, raw in enumerate(data.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            if header is not None:
                raise DimacsError("duplicate problem line", lineno)
            parts = line.split()
            if len(parts) != 4 or parts[0] != "p" or parts[1] != "cnf":
                raise DimacsError(f"malformed header {line!r}", lineno)
            try:
                n, m = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"malformed header {line!r}", lineno) from None
            if n < 0 or m < 0:
                raise DimacsError("negative counts in header", lineno)
            header = (n, m)
            continue
        if header is None:
            raise DimacsError("clause data before 'p cnf' header", lineno)
        n, m = header
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"unexpected token {tok!r}", lineno) from None
            if lit == 0:
                if len(clauses) >= m:
                    raise DimacsError(f"more than {m} clauses", lineno)
                clauses.append(normalize_clause(current))
                current = []
                current_start = None
                continue
            if abs(lit) > n:
                raise DimacsError(f"literal {lit} exceeds n={n}", lineno)
            if len(clauses) >= m:
                raise DimacsError(f"trailing data after {m} clauses", lineno)
            if current_start is None:
                current_start = lineno
            current.append(lit)
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        raise DimacsError("clause not terminated by 0", current_start)
    n, m = header
    if len(clauses) != m:
        raise DimacsError(f"header declares {m} clauses, found {len(clauses)}")
    return Formula(n, tuple(clauses))


def write_dimacs(formula: Formula) -> bytes:
    lines = [f"p cnf {formula.num_vars} {formula.num_clauses}"]
    for c in formula.clauses:
        lines.append(" ".join([str(lit) for lit in c] + ["0"]))
    return ("\n".join(lines) + "\n").encode("ascii")


def read_dimacs(path) -> Formula:
    with open(path, "rb") as fh:
        return parse_dimacs(fh.read())


def evaluate(formula: Formula, assignment: Assignment) -> Evaluation:
    values = assignment.values
    if len(values) < formula.num_vars:
        raise ValueError("assignment does not cover every variable")
    undetermined = False
    for clause in formula.clauses:
        clause_true = False
        clause_open = False
        for lit in clause:
            v = values[abs(lit) - 1]
            if v is None:
                clause_open = True
            elif v == (lit > 0):
                clause_true = True
                break
        if clause_true:
            continue
        if not clause_open:
            return Evaluation.FALSIFIED
        undetermined = True
    return Evaluation.UNDETERMINED if undetermined else Evaluation.SATISFIED


BRUTE_FORCE_MAX_VARS = 24


def brute_force_solve(formula: Formula) -> Optional[Assignment]:
    """Exhaustive search; returns the first model or None when UNSAT.

    Assignments are enumerated as integers k = 0, 1, 2, ... where bit j-1 of k
    is the value of x_j (so variable 1 is the least significant bit and false
    comes before true).
    """
    n = formula.num_vars
    if n > BRUTE_FORCE_MAX_VARS:
        raise ValueError(f"brute force refuses n={n} > {BRUTE_FORCE_MAX_VARS}")
    if formula.has_empty_clause:
        return None
    if n <= 8:
        return _brute_force_small(formula)
    import numpy as np

    chunk = 1 << 16
    total = 1 << n
    shifts = np.arange(n, dtype=np.int64)
    for start in range(0, total, chunk):
        ks = np.arange(start, min(start + chunk, total), dtype=np.int64)
        bits = ((ks[:, None] >> shifts[None, :]) & 1).astype(bool)
        ok = np.ones(len(ks), dtype=bool)
        for clause in formula.clauses:
            sat = np.zeros(len(ks), dtype=bool)
            for lit in clause:
                col = bits[:, abs(lit) - 1]
                sat |= col if lit > 0 else ~col
            ok &= sat
            if not ok.any():
                break
        hits = np.flatnonzero(ok)
        if hits.size:
            k = int(ks[hits[0]])
            return Assignment(tuple(bool((k >> j) & 1) for j in range(n)))
    return None


def _brute_force_small(formula: Formula) -> Optional[Assignment]:
    n = formula.num_vars
    for k in range(1 << n):
        values = tuple(bool((k >> j) & 1) for j in range(n))
        if all(any(values[abs(l) - 1] == (l > 0) for l in c) for c in formula.clauses):
            return Assignment(values)
    return None

