"""MiniSAT-2.2-style CDCL with a level-annotated event trail.

Internally a literal is encoded as ``2*(var-1) + sign`` (sign 1 = negated) so
that per-literal arrays can be plain lists.  Everything exposed publicly uses
signed DIMACS literals.

Every decision is logged as ``D``, every literal implied by unit propagation
as ``A`` and every backjump as ``BT`` carrying the asserting literal that is
enqueued right after it.  A restart from a level above 0 logs ``BT 0 0``.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

from .cnf import Assignment, Evaluation, Formula, evaluate
from .events import ASSIGN, BACKTRACK, DECISION, Trail, TrailEvent
from .rng import SplitMix64

SAT = "SAT"
UNSAT = "UNSAT"

_ACTIVITY_LIMIT = 1e100
_CLAUSE_ACTIVITY_LIMIT = 1e20


@dataclass(frozen=True)
class SolverConfig:
    var_decay: float = 0.95
    clause_decay: float = 0.999
    restart_base: int = 100
    restart_inc: float = 2.0
    phase_saving: bool = True
    learned_db_factor: float = 1.0 / 3.0
    learned_db_growth: float = 1.1
    random_var_freq: float = 0.0
    restarts: bool = True
    minimize: bool = False
    seed: int = 91648253

    def __post_init__(self):
        if not 0 < self.var_decay < 1 or not 0 < self.clause_decay < 1:
            raise ValueError("decay factors must lie in (0, 1)")
        if self.restart_base <= 0:
            raise ValueError("restart_base must be positive")
        if self.learned_db_growth <= 1:
            raise ValueError("learned_db_growth must exceed 1")
        if not 0 <= self.random_var_freq <= 1:
            raise ValueError("random_var_freq must lie in [0, 1]")


@dataclass
class RunStats:
    decisions: int = 0
    propagations: int = 0
    conflicts: int = 0
    restarts: int = 0
    learned_clauses: int = 0
    time_propagate: float = 0.0
    time_analyze: float = 0.0
    time_decide: float = 0.0
    wall_time: float = 0.0
    outcome: Optional[str] = None
    model: Optional[Assignment] = None
    queries: int = 0
    accepted: int = 0
    extern_failures: int = 0

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d["model"] = self.model.literals() if self.model is not None else None
        if not timing:
            for key in ("time_propagate", "time_analyze", "time_decide", "wall_time"):
                d.pop(key)
        return d

    def counters(self) -> tuple:
        """Everything except timing; equal counters mean identical search."""
        return (self.decisions, self.propagations, self.conflicts, self.restarts,
                self.learned_clauses, self.outcome, self.queries, self.accepted)


def luby(y: float, x: int) -> float:
    size, seq = 1, 0
    while size < x + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != x:
        size = (size - 1) >> 1
        seq -= 1
        x = x % size
    return y ** seq


def _signed(code: int) -> int:
    return -((code >> 1) + 1) if code & 1 else (code >> 1) + 1


def _code(lit: int) -> int:
    return 2 * (abs(lit) - 1) + (1 if lit < 0 else 0)


class Clause:
    __slots__ = ("lits", "learnt", "activity", "removed")

    def __init__(self, lits: list, learnt: bool = False):
        self.lits = lits
        self.learnt = learnt
        self.activity = 0.0
        self.removed = False

    @property
    def literals(self) -> list:
        return [_signed(c) for c in self.lits]

    def __repr__(self):
        return f"Clause({self.literals}{', learnt' if self.learnt else ''})"


Brancher = Callable[["Solver"], int]


class Solver:
    """One CDCL run over a formula.  Not reusable after :meth:`solve`.

    ``brancher``, when given, is called at every branching point with the
    solver and must return a legal signed literal; it is timed as part of the
    decide phase.  Without one the solver branches on VSIDS.
    """

    def __init__(self, formula: Formula, config: Optional[SolverConfig] = None,
                 brancher: Optional[Brancher] = None, debug: bool = False):
        self.formula = formula
        self.config = config or SolverConfig()
        self.brancher = brancher
        self.debug = debug
        self.stats = RunStats()
        n = formula.num_vars
        self.num_vars = n
        self.vals = [0] * (2 * n)
        self.level = [0] * n
        self.reason: list = [None] * n
        self.trail: list = []
        self.trail_lim: list = []
        self.qhead = 0
        self.watches: list = [[] for _ in range(2 * n)]
        self.activity = [0.0] * n
        self.var_inc = 1.0
        self.cla_inc = 1.0
        self.polarity = [False] * n
        self.heap = [(0.0, v) for v in range(n)]
        self.heap_mark: list = [0.0] * n  # activity of v's live heap entry, None if none
        self.seen = [0] * n
        self.clauses: list = []
        self.learnts: list = []
        self.events: list = []
        self.rng = SplitMix64(self.config.seed)
        self.ok = True
        self._pending_conflict: Optional[Clause] = None
        self._random_freq = self.config.random_var_freq
        self._phase_saving = self.config.phase_saving

        simplified = formula.simplify()
        self.max_learnts = max(simplified.num_clauses * self.config.learned_db_factor, 1.0)
        for lits in simplified.clauses:
            if not self.ok:
                break
            self._add_input_clause([_code(l) for l in lits])

    # -- setup ---------------------------------------------------------------

    def _add_input_clause(self, codes: list) -> None:
        if not codes:
            self.ok = False
            return
        c = Clause(codes)
        self.clauses.append(c)
        if len(codes) == 1:
            lit = codes[0]
            if self.vals[lit] == 0:
                self._enqueue(lit, c)
                self.events.append((ASSIGN, _signed(lit), 0))
                self.stats.propagations += 1
            elif self.vals[lit] == -1 and self._pending_conflict is None:
                self._pending_conflict = c
        else:
            self.watches[codes[0]].append(c)
            self.watches[codes[1]].append(c)

    # -- queries -------------------------------------------------------------

    @property
    def decision_level(self) -> int:
        return len(self.trail_lim)

    def value(self, lit: int) -> Optional[bool]:
        v = self.vals[_code(lit)]
        return None if v == 0 else v > 0

    def is_assigned(self, var: int) -> bool:
        return self.vals[2 * (var - 1)] != 0

    def assignment(self) -> Assignment:
        return Assignment(tuple(None if self.vals[2 * v] == 0 else self.vals[2 * v] > 0
                                for v in range(self.num_vars)))

    def assigned_literals(self) -> list:
        return [_signed(c) for c in self.trail]

    def var_level(self, var: int) -> int:
        return self.level[var - 1]

    def current_trail(self) -> list:
        """The events logged so far (tag, literal, level) tuples."""
        return self.events

    # -- core ----------------------------------------------------------------

    def _enqueue(self, lit: int, reason: Optional[Clause]) -> None:
        self.vals[lit] = 1
        self.vals[lit ^ 1] = -1
        v = lit >> 1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _propagate(self) -> Optional[Clause]:
        if self._pending_conflict is not None:
            c, self._pending_conflict = self._pending_conflict, None
            self.qhead = len(self.trail)
            return c
        vals = self.vals
        watches = self.watches
        trail = self.trail
        events = self.events
        level = len(self.trail_lim)
        conflict = None
        implied = 0
        while self.qhead < len(trail):
            false_lit = trail[self.qhead] ^ 1
            self.qhead += 1
            ws = watches[false_lit]
            i = j = 0
            end = len(ws)
            while i < end:
                c = ws[i]
                i += 1
                lits = c.lits
                if lits[0] == false_lit:
                    lits[0] = lits[1]
                    lits[1] = false_lit
                first = lits[0]
                if vals[first] == 1:
                    ws[j] = c
                    j += 1
                    continue
                for k in range(2, len(lits)):
                    lk = lits[k]
                    if vals[lk] != -1:
                        lits[1] = lk
                        lits[k] = false_lit
                        watches[lk].append(c)
                        break
                else:
                    ws[j] = c
                    j += 1
                    if vals[first] == -1:
                        conflict = c
                        self.qhead = len(trail)
                        while i < end:
                            ws[j] = ws[i]
                            j += 1
                            i += 1
                    else:
                        vals[first] = 1
                        vals[first ^ 1] = -1
                        v = first >> 1
                        self.level[v] = level
                        self.reason[v] = c
                        trail.append(first)
                        events.append((ASSIGN, -(v + 1) if first & 1 else v + 1, level))
                        implied += 1
            del ws[j:]
            if conflict is not None:
                break
        self.stats.propagations += implied
        if self.debug and conflict is None:
            self._check_watches()
        return conflict

    def propagate(self) -> Optional[Clause]:
        """Unit propagation to fixpoint; returns the falsified clause, if any."""
        return self._propagate()

    def bump_activity(self, var: int) -> None:
        """VSIDS bump of ``var`` (1-based) by the current increment."""
        v = var - 1
        act = self.activity
        act[v] += self.var_inc
        if act[v] > _ACTIVITY_LIMIT:
            self._rescale()
        elif self.vals[2 * v] == 0:
            heapq.heappush(self.heap, (-act[v], v))
            self.heap_mark[v] = act[v]

    def decay_activities(self) -> None:
        self.var_inc /= self.config.var_decay

    def _rescale(self) -> None:
        act = self.activity
        for i in range(self.num_vars):
            act[i] *= 1e-100
        self.var_inc *= 1e-100
        self._rebuild_heap()

    def _bump_clause(self, c: Clause) -> None:
        c.activity += self.cla_inc
        if c.activity > _CLAUSE_ACTIVITY_LIMIT:
            self._rescale_clauses()

    def _rescale_clauses(self) -> None:
        for lc in self.learnts:
            lc.activity *= 1e-20
        self.cla_inc *= 1e-20

    def _rebuild_heap(self) -> None:
        act = self.activity
        vals = self.vals
        self.heap = [(-act[v], v) for v in range(self.num_vars) if vals[2 * v] == 0]
        heapq.heapify(self.heap)
        self.heap_mark = [act[v] if vals[2 * v] == 0 else None for v in range(self.num_vars)]

    def _analyze(self, confl: Clause) -> tuple:
        seen = self.seen
        level = self.level
        reason = self.reason
        trail = self.trail
        dl = len(self.trail_lim)
        out = [-1]
        path_c = 0
        p = -1
        index = len(trail) - 1
        act = self.activity
        inc = self.var_inc
        rescale = False
        while True:
            if confl.learnt:
                confl.activity += self.cla_inc
                if confl.activity > _CLAUSE_ACTIVITY_LIMIT:
                    self._rescale_clauses()
            # The implied literal p heads its reason clause and is still marked,
            # so a plain scan over the clause skips it.
            for q in confl.lits:
                v = q >> 1
                if not seen[v]:
                    lv = level[v]
                    if lv > 0:
                        seen[v] = 1
                        a = act[v] + inc
                        act[v] = a
                        if a > _ACTIVITY_LIMIT:
                            rescale = True
                        if lv >= dl:
                            path_c += 1
                        else:
                            out.append(q)
            if p != -1:
                seen[p >> 1] = 0
            while not seen[trail[index] >> 1]:
                index -= 1
            p = trail[index]
            index -= 1
            path_c -= 1
            if path_c <= 0:
                break
            confl = reason[p >> 1]
        seen[p >> 1] = 0
        out[0] = p ^ 1
        if rescale:
            self._rescale()

        to_clear = out[:]
        if self.config.minimize:
            abstract = 0
            for q in out[1:]:
                abstract |= 1 << (level[q >> 1] & 31)
            j = 1
            for i in range(1, len(out)):
                q = out[i]
                if reason[q >> 1] is None or not self._lit_redundant(q, abstract, to_clear):
                    out[j] = q
                    j += 1
            del out[j:]

        if len(out) == 1:
            bt = 0
        else:
            max_i = 1
            for i in range(2, len(out)):
                if level[out[i] >> 1] > level[out[max_i] >> 1]:
                    max_i = i
            out[1], out[max_i] = out[max_i], out[1]
            bt = level[out[1] >> 1]
        for q in to_clear:
            seen[q >> 1] = 0
        return out, bt

    def _lit_redundant(self, p: int, abstract: int, to_clear: list) -> bool:
        seen = self.seen
        level = self.level
        reason = self.reason
        stack = [p]
        top = len(to_clear)
        while stack:
            q = stack.pop()
            c = reason[q >> 1]
            for lit in c.lits[1:]:
                v = lit >> 1
                if not seen[v] and level[v] > 0:
                    if reason[v] is not None and ((1 << (level[v] & 31)) & abstract):
                        seen[v] = 1
                        stack.append(lit)
                        to_clear.append(lit)
                    else:
                        for k in range(top, len(to_clear)):
                            seen[to_clear[k] >> 1] = 0
                        del to_clear[top:]
                        return False
        return True

    def analyze(self, conflict: Clause) -> tuple:
        """First-UIP analysis: (learned clause, backjump level, asserting literal).

        The learned clause is returned as signed literals with the asserting
        literal first.  Must not be called at decision level 0.
        """
        if self.decision_level == 0:
            raise ValueError("conflict at level 0 means UNSAT; nothing to analyse")
        out, bt = self._analyze(conflict)
        return [_signed(c) for c in out], bt, _signed(out[0])

    def _cancel_until(self, target: int) -> None:
        if len(self.trail_lim) <= target:
            return
        vals = self.vals
        act = self.activity
        heap = self.heap
        mark = self.heap_mark
        reason = self.reason
        polarity = self.polarity
        push = heapq.heappush
        stop = self.trail_lim[target]
        save = self.config.phase_saving
        trail = self.trail
        for idx in range(len(trail) - 1, stop - 1, -1):
            lit = trail[idx]
            v = lit >> 1
            vals[lit] = 0
            vals[lit ^ 1] = 0
            reason[v] = None
            if save:
                polarity[v] = not (lit & 1)
            if mark[v] != act[v]:
                push(heap, (-act[v], v))
                mark[v] = act[v]
        del self.trail[stop:]
        del self.trail_lim[target:]
        self.qhead = len(self.trail)
        if len(heap) > 4 * self.num_vars + 64:
            self._rebuild_heap()

    def backjump(self, level: int, asserting: Optional[int] = None) -> None:
        """Undo every assignment above ``level`` and log the BT event.

        ``asserting`` is the signed literal about to be enqueued; None logs a
        restart (literal 0).
        """
        if level >= self.decision_level:
            raise ValueError(f"backjump target {level} not below current level {self.decision_level}")
        self._cancel_until(level)
        self.events.append((BACKTRACK, asserting if asserting is not None else 0, level))

    def vsids_pick(self) -> int:
        """Highest-activity unassigned variable (lowest index on ties) with its saved phase."""
        vals = self.vals
        if self._random_freq > 0 and self.rng.uniform() < self._random_freq:
            free = [v for v in range(self.num_vars) if vals[2 * v] == 0]
            if free:
                return self._polarised(free[self.rng.below(len(free))])
        heap = self.heap
        act = self.activity
        mark = self.heap_mark
        pop = heapq.heappop
        while heap:
            neg_act, v = pop(heap)
            if -neg_act != act[v]:
                continue
            mark[v] = None
            if vals[2 * v] != 0:
                continue
            if self._phase_saving and self.polarity[v]:
                return v + 1
            return -(v + 1)
        for v in range(self.num_vars):
            if vals[2 * v] == 0:
                return self._polarised(v)
        raise RuntimeError("vsids_pick called with every variable assigned")

    def _polarised(self, v: int) -> int:
        positive = self.polarity[v] if self.config.phase_saving else False
        return v + 1 if positive else -(v + 1)

    def _decide(self, lit: int) -> None:
        v = (lit if lit > 0 else -lit) - 1
        code = 2 * v + (lit < 0)
        vals = self.vals
        if not 0 <= v < self.num_vars or vals[code] != 0:
            raise RuntimeError(f"illegal decision {lit}")
        trail = self.trail
        lim = self.trail_lim
        lim.append(len(trail))
        vals[code] = 1
        vals[code ^ 1] = -1
        dl = len(lim)
        self.level[v] = dl
        self.reason[v] = None
        trail.append(code)
        self.stats.decisions += 1
        self.events.append((DECISION, lit, dl))

    def decide(self, lit: int) -> None:
        """Open a new decision level with ``lit`` (which must be unassigned)."""
        self._decide(lit)

    def _learn(self, out: list, bt: int) -> None:
        asserting = out[0]
        self.backjump(bt, _signed(asserting))
        if len(out) == 1:
            self._enqueue(asserting, None)
        else:
            c = Clause(out, learnt=True)
            self.learnts.append(c)
            self.watches[out[0]].append(c)
            self.watches[out[1]].append(c)
            self._bump_clause(c)
            self._enqueue(asserting, c)
        self.stats.learned_clauses += 1

    def _locked(self, c: Clause) -> bool:
        first = c.lits[0]
        return self.reason[first >> 1] is c and self.vals[first] == 1

    def _reduce_db(self) -> None:
        learnts = self.learnts
        extra_lim = self.cla_inc / len(learnts)
        learnts.sort(key=lambda c: (len(c.lits) == 2, c.activity))
        half = len(learnts) // 2
        kept = []
        removed_any = False
        for i, c in enumerate(learnts):
            if len(c.lits) > 2 and not self._locked(c) and (i < half or c.activity < extra_lim):
                c.removed = True
                removed_any = True
            else:
                kept.append(c)
        self.learnts = kept
        if removed_any:
            for k, ws in enumerate(self.watches):
                if any(c.removed for c in ws):
                    self.watches[k] = [c for c in ws if not c.removed]
        self.max_learnts *= self.config.learned_db_growth

    def _check_watches(self) -> None:
        vals = self.vals
        for c in self.clauses + self.learnts:
            if len(c.lits) < 2 or c.removed:
                continue
            if any(vals[l] == 1 for l in c.lits):
                continue
            a, b = c.lits[0], c.lits[1]
            assert vals[a] != -1 and vals[b] != -1, f"watch invariant broken for {c}"
            assert c in self.watches[a] and c in self.watches[b]

    def _check_learned(self, out: list, bt: int) -> None:
        dl = len(self.trail_lim)
        assert all(self.vals[l] == -1 for l in out), "learned clause not falsified"
        at_top = [l for l in out if self.level[l >> 1] == dl]
        assert at_top == [out[0]], "learned clause must have exactly one current-level literal"
        assert all(self.level[l >> 1] <= bt for l in out[1:])

    # -- main loop -----------------------------------------------------------

    def _pick_branch(self) -> int:
        if self.brancher is not None:
            return self.brancher(self)
        return self.vsids_pick()

    def _search(self, nof_conflicts: float) -> Optional[str]:
        stats = self.stats
        cfg = self.config
        clock = time.perf_counter
        conflict_c = 0
        while True:
            t0 = clock()
            confl = self._propagate()
            stats.time_propagate += clock() - t0
            if confl is not None:
                if not self.trail_lim:
                    return UNSAT
                t0 = clock()
                out, bt = self._analyze(confl)
                stats.time_analyze += clock() - t0
                stats.conflicts += 1
                conflict_c += 1
                if self.debug:
                    self._check_learned(out, bt)
                self._learn(out, bt)
                self.var_inc /= cfg.var_decay
                self.cla_inc /= cfg.clause_decay
                continue
            if cfg.restarts and conflict_c >= nof_conflicts:
                if self.trail_lim:
                    self.backjump(0)
                return None
            if len(self.learnts) - len(self.trail) >= self.max_learnts:
                self._reduce_db()
            if len(self.trail) == self.num_vars:
                return SAT
            t0 = clock()
            lit = self._pick_branch()
            self._decide(lit)
            stats.time_decide += clock() - t0

    def solve(self) -> tuple:
        """Run to completion; returns (RunStats, Trail)."""
        start = time.perf_counter()
        stats = self.stats
        outcome = None
        if not self.ok:
            outcome = UNSAT
        restarts = 0
        while outcome is None:
            budget = luby(self.config.restart_inc, restarts) * self.config.restart_base
            outcome = self._search(budget)
            if outcome is None:
                restarts += 1
        stats.restarts = restarts
        stats.outcome = outcome
        if outcome == SAT:
            model = self.assignment()
            if evaluate(self.formula, model) is not Evaluation.SATISFIED:
                raise RuntimeError("solver produced a model that does not satisfy the formula")
            stats.model = model
        stats.wall_time = time.perf_counter() - start
        trail = Trail(tuple(TrailEvent(*e) for e in self.events), self.num_vars)
        return stats, trail


def solve(formula: Formula, config: Optional[SolverConfig] = None, policy=None, budget=None,
          debug: bool = False) -> tuple:
    """Solve ``formula``; with a policy, branching goes through the budgeted hook.

    Returns (RunStats, Trail).
    """
    brancher = None
    if policy is not None:
        from .policy import PolicyBrancher

        brancher = PolicyBrancher(formula, policy, budget)
    solver = Solver(formula, config, brancher, debug=debug)
    stats, trail = solver.solve()
    if brancher is not None:
        stats.queries = brancher.queries
        stats.accepted = brancher.accepted
        stats.extern_failures = getattr(policy, "failures", 0)
    return stats, trail
