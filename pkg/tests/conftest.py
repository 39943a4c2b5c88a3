import random

import pytest
from hypothesis import settings, strategies as st

from keytrace_sat.cnf import Formula

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# Three-clause example formula over x1..x4.
EQ3 = Formula(4, ((1, -3, 4), (-1, 2, 3), (-2, -3, -4)))
EQ3_DIMACS = "p cnf 4 3\n1 -3 4 0\n-1 2 3 0\n-2 -3 -4 0\n"

# Worked-example formula whose run collapses to a three-decision KeyTrace.
APPX_F = Formula(4, ((1, 2, -3), (-4, -2, -3), (1, 3, -4, 2), (-3, -1, -4), (3, -4, -2), (-2, 4, 3)))
APPX_TRAIL = (("D", 4, 1), ("D", 3, 2), ("BT", -3, 1), ("BT", -4, 0),
              ("D", 1, 1), ("D", 2, 2), ("A", -3, 2))
APPX_KEYTRACE = (("D", -4, 0), ("D", 1, 1), ("D", 2, 2), ("A", -3, 2))


def random_formula(rng: random.Random, n: int, m: int, width=(1, 4)) -> Formula:
    clauses = []
    for _ in range(m):
        k = rng.randint(*width)
        vs = rng.sample(range(1, n + 1), min(k, n))
        clauses.append(tuple(v if rng.random() < 0.5 else -v for v in vs))
    return Formula(n, tuple(clauses))


@st.composite
def formulas(draw, max_vars=8, max_clauses=30, min_width=1, max_width=4):
    n = draw(st.integers(1, max_vars))
    lit = st.integers(1, n).flatmap(lambda v: st.sampled_from((v, -v)))
    clause = st.lists(lit, min_size=min_width, max_size=max_width, unique_by=abs).map(tuple)
    return Formula(n, tuple(draw(st.lists(clause, max_size=max_clauses))))


@pytest.fixture
def rng():
    return random.Random(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[num])
