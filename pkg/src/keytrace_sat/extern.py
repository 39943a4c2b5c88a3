"""Line protocol for branching policies living in another process.

Grammar (one message per line, ASCII, ``\\n`` terminated)::

    solver -> child   HELLO keytrace-sat 1
    child  -> solver  READY
    solver -> child   QUERY <n> | <token stream>
    child  -> solver  DECIDE <signed int>   |   PASS

The token stream is the space-separated serialization with markers spelled
``[CNF] [SEP] [D]``.  A reply that does not match the grammar counts as PASS.
A timeout or a dead child disables the policy for the rest of the run; every
such event, and every malformed reply, increments ``failures``.
"""
from __future__ import annotations

import queue
import re
import shlex
import subprocess
import sys
import threading
from typing import Callable, Optional

from .cnf import Formula
from .keytrace import KeyTrace, deserialize, keytrace_from_blocks, serialize, text_to_tokens, tokens_to_text

HELLO = "HELLO keytrace-sat 1"
READY = "READY"
PASS = "PASS"
DEFAULT_TIMEOUT = 2.0

_DECIDE = re.compile(r"^DECIDE (-?[1-9][0-9]*)$")
_QUERY = re.compile(r"^QUERY ([0-9]+) \| (.*)$")


def format_query(num_vars: int, tokens) -> str:
    return f"QUERY {num_vars} | {tokens_to_text(tokens)}"


def parse_query(line: str) -> tuple:
    """Returns (Formula, KeyTrace) from a QUERY line; raises ValueError if malformed."""
    m = _QUERY.match(line.strip())
    if not m:
        raise ValueError(f"malformed query {line!r}")
    n = int(m.group(1))
    clauses, blocks = deserialize(text_to_tokens(m.group(2)))
    return Formula(n, tuple(clauses)), keytrace_from_blocks(blocks)


def parse_response(line: str) -> tuple:
    """Returns (ok, literal or None)."""
    line = line.strip()
    if line == PASS:
        return True, None
    m = _DECIDE.match(line)
    if m:
        return True, int(m.group(1))
    return False, None


class ExternPolicy:
    name = "extern"

    def __init__(self, command: str, timeout: float = DEFAULT_TIMEOUT):
        self.command = command
        self.timeout = timeout
        self.failures = 0
        self.proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._cnf_cache: tuple = (None, None)
        try:
            self.proc = subprocess.Popen(
                shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, encoding="ascii", bufsize=1)
        except OSError:
            self.failures += 1
            return
        threading.Thread(target=self._pump, args=(self.proc.stdout,), daemon=True).start()
        reply = self._exchange(HELLO)
        if reply is None:
            return
        if reply.strip() != READY:
            self.failures += 1
            self.close()

    @property
    def alive(self) -> bool:
        return self.proc is not None and self.proc.poll() is None

    def _pump(self, stream) -> None:
        for line in stream:
            self._lines.put(line)
        self._lines.put(None)

    def _exchange(self, line: str) -> Optional[str]:
        if not self.alive:
            return None
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
            reply = self._lines.get(timeout=self.timeout)
        except (OSError, ValueError, queue.Empty):
            reply = None
        if reply is None:
            self.failures += 1
            self.close()
        return reply

    def query(self, formula: Formula, prefix: KeyTrace) -> Optional[int]:
        if not self.alive:
            return None
        cached_formula, head = self._cnf_cache
        if cached_formula is not formula:
            from .keytrace import cnf_tokens

            head = cnf_tokens(formula)
            self._cnf_cache = (formula, head)
        reply = self._exchange(format_query(formula.num_vars, serialize(formula, prefix, head)))
        if reply is None:
            return None
        ok, lit = parse_response(reply)
        if not ok:
            self.failures += 1
        return lit

    def close(self) -> None:
        proc, self.proc = self.proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def extern_policy(command: str, timeout: float = DEFAULT_TIMEOUT) -> ExternPolicy:
    return ExternPolicy(command, timeout)


def serve(decide: Callable[[Formula, KeyTrace], Optional[int]], stdin=None, stdout=None) -> None:
    """Child-side loop: answer QUERY lines with ``decide(formula, prefix)``."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if line == HELLO:
            reply = READY
        else:
            try:
                formula, prefix = parse_query(line)
                lit = decide(formula, prefix)
            except ValueError:
                lit = None
            reply = PASS if lit is None else f"DECIDE {lit}"
        stdout.write(reply + "\n")
        stdout.flush()
