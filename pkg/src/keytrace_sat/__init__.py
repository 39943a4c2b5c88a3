"""CDCL SAT solving with KeyTrace extraction, replay and budgeted branching policies."""
from .cnf import Assignment, DimacsError, Formula, brute_force_solve, parse_dimacs, write_dimacs
from .keytrace import KeyTrace, extract_keytrace, replay, serialize
from .policy import Budget, budgeted_decide, expert_policy
from .solver import RunStats, Solver, SolverConfig, solve

__all__ = [
    "Assignment", "DimacsError", "Formula", "brute_force_solve", "parse_dimacs", "write_dimacs",
    "KeyTrace", "extract_keytrace", "replay", "serialize",
    "Budget", "budgeted_decide", "expert_policy",
    "RunStats", "Solver", "SolverConfig", "solve",
]
__version__ = "0.1.0"
