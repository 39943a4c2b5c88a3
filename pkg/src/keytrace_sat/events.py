"""Level-annotated solver events and the line-oriented trail file format.

File layout::

    trail v1 n=<n>          (or ``keytrace v1 n=<n>`` for collapsed traces)
    D 4 1
    A -3 2
    BT -4 0
    BT 0 0                  (restart: no literal is enqueued)

Each event line is ``<tag> <signed literal> <level after the event>``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple, Union

DECISION = "D"
ASSIGN = "A"
BACKTRACK = "BT"
TAGS = (DECISION, ASSIGN, BACKTRACK)

TRAIL_HEADER = "trail"
KEYTRACE_HEADER = "keytrace"
FORMAT_VERSION = "v1"


class TrailEvent(NamedTuple):
    tag: str
    literal: int
    level: int


class TrailFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Trail:
    events: tuple = ()
    num_vars: int = 0

    def __len__(self):
        return len(self.events)

    def count(self, tag: str) -> int:
        return sum(1 for ev in self.events if ev[0] == tag)


def format_events(events: Iterable, num_vars: int, header: str = TRAIL_HEADER) -> str:
    lines = [f"{header} {FORMAT_VERSION} n={num_vars}"]
    lines.extend(f"{tag} {lit} {level}" for tag, lit, level in events)
    return "\n".join(lines) + "\n"


def parse_events(text: str, allowed_tags=TAGS) -> tuple:
    """Returns (header kind, num_vars, tuple of TrailEvent)."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise TrailFormatError("empty trail file")
    head = lines[0].split()
    if len(head) != 3 or head[0] not in (TRAIL_HEADER, KEYTRACE_HEADER) or head[1] != FORMAT_VERSION \
            or not head[2].startswith("n="):
        raise TrailFormatError(f"bad header {lines[0]!r}")
    try:
        n = int(head[2][2:])
    except ValueError:
        raise TrailFormatError(f"bad header {lines[0]!r}") from None
    events = []
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split()
        if len(parts) != 3 or parts[0] not in allowed_tags:
            raise TrailFormatError(f"line {lineno}: bad event {line!r}")
        try:
            lit, level = int(parts[1]), int(parts[2])
        except ValueError:
            raise TrailFormatError(f"line {lineno}: bad event {line!r}") from None
        if abs(lit) > n or level < 0 or (lit == 0 and parts[0] != BACKTRACK):
            raise TrailFormatError(f"line {lineno}: event out of range {line!r}")
        events.append(TrailEvent(parts[0], lit, level))
    return head[0], n, tuple(events)


def write_trail(trail: Trail, fh: IO[str]) -> None:
    fh.write(format_events(trail.events, trail.num_vars))


def read_trail(source: Union[str, IO[str]]) -> Trail:
    text = source if isinstance(source, str) else source.read()
    _, n, events = parse_events(text)
    return Trail(events, n)


def load_trail(path) -> Trail:
    with open(path) as fh:
        return read_trail(fh.read())


def save_trail(trail: Trail, path) -> None:
    with open(path, "w") as fh:
        write_trail(trail, fh)
