"""Transformation-command DSL: parsing, printing, canonicalization.

Grammar (whitespace tolerated on input, absent in canonical output):

    schedule := command { "+" command }
    command  := comp_id "." op
    comp_id  := "comp" digit digit
    op       := "Fuse(" comp_id "," level ")"
              | "Interchange(" level "," level ")"
              | "Parallelize(" level ")"
              | "Tile2D(" level "," level "," factor "," factor ")"
              | "Tile3D(" level "," level "," level "," factor "," factor "," factor ")"
              | "Unroll(" level "," factor ")"
              | "Skew(" level "," level ")"
              | "Reverse(" level ")"
    level    := "L" ( "-1" | digits )      -- "L-1" selects the innermost loop
    factor   := digits

Model responses carry a schedule inside <schedule>...</schedule> tags, or the
quit token `no_further_transformations`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

SCHEDULE_OPEN = "<schedule>"
SCHEDULE_CLOSE = "</schedule>"
QUIT_TOKEN = "no_further_transformations"

COMP_RE = re.compile(r"comp\d{2}$")


class ScheduleParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"at position {pos}: {message}")
        self.message = message
        self.pos = pos


# ---------------------------------------------------------------------------
# loop levels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Depth:
    d: int

    def __post_init__(self) -> None:
        if self.d < 0:
            raise ValueError(f"loop level must be non-negative, got L{self.d}")

    def __str__(self) -> str:
        return f"L{self.d}"


@dataclass(frozen=True)
class Innermost:
    def __str__(self) -> str:
        return "L-1"


LoopLevel = Union[Depth, Innermost]


def _concrete(level: LoopLevel) -> int | None:
    return level.d if isinstance(level, Depth) else None


# ---------------------------------------------------------------------------
# transformation commands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fuse:
    comp: str
    partner: str
    level: LoopLevel

    def __post_init__(self) -> None:
        if self.comp == self.partner:
            raise ValueError("Fuse partners must be distinct computations")

    def __str__(self) -> str:
        return f"{self.comp}.Fuse({self.partner},{self.level})"


@dataclass(frozen=True)
class Interchange:
    comp: str
    level1: LoopLevel
    level2: LoopLevel

    def __post_init__(self) -> None:
        if self.level1 == self.level2:
            raise ValueError("Interchange levels must be distinct")

    def __str__(self) -> str:
        return f"{self.comp}.Interchange({self.level1},{self.level2})"


@dataclass(frozen=True)
class Parallelize:
    comp: str
    level: LoopLevel

    def __str__(self) -> str:
        return f"{self.comp}.Parallelize({self.level})"


@dataclass(frozen=True)
class Tile2D:
    comp: str
    level1: LoopLevel
    level2: LoopLevel
    factor1: int
    factor2: int

    def __post_init__(self) -> None:
        for f in (self.factor1, self.factor2):
            if f < 2:
                raise ValueError(f"tile factors must be >= 2, got {f}")
        d1, d2 = _concrete(self.level1), _concrete(self.level2)
        if d1 is not None and d2 is not None and d2 != d1 + 1:
            raise ValueError("Tile2D levels must be adjacent and ordered")

    def __str__(self) -> str:
        return f"{self.comp}.Tile2D({self.level1},{self.level2},{self.factor1},{self.factor2})"


@dataclass(frozen=True)
class Tile3D:
    comp: str
    level1: LoopLevel
    level2: LoopLevel
    level3: LoopLevel
    factor1: int
    factor2: int
    factor3: int

    def __post_init__(self) -> None:
        for f in (self.factor1, self.factor2, self.factor3):
            if f < 2:
                raise ValueError(f"tile factors must be >= 2, got {f}")
        ds = [_concrete(l) for l in (self.level1, self.level2, self.level3)]
        if all(d is not None for d in ds) and (ds[1] != ds[0] + 1 or ds[2] != ds[1] + 1):
            raise ValueError("Tile3D levels must be consecutive")

    def __str__(self) -> str:
        return (
            f"{self.comp}.Tile3D({self.level1},{self.level2},{self.level3},"
            f"{self.factor1},{self.factor2},{self.factor3})"
        )


@dataclass(frozen=True)
class Unroll:
    comp: str
    level: LoopLevel
    factor: int

    def __post_init__(self) -> None:
        if self.factor < 2:
            raise ValueError(f"unroll factor must be >= 2, got {self.factor}")

    def __str__(self) -> str:
        return f"{self.comp}.Unroll({self.level},{self.factor})"


@dataclass(frozen=True)
class Skew:
    comp: str
    level1: LoopLevel
    level2: LoopLevel

    def __post_init__(self) -> None:
        d1, d2 = _concrete(self.level1), _concrete(self.level2)
        if d1 is not None and d2 is not None and d2 != d1 + 1:
            raise ValueError("Skew levels must be adjacent and ordered")

    def __str__(self) -> str:
        return f"{self.comp}.Skew({self.level1},{self.level2})"


@dataclass(frozen=True)
class Reverse:
    comp: str
    level: LoopLevel

    def __str__(self) -> str:
        return f"{self.comp}.Reverse({self.level})"


Transformation = Union[Fuse, Interchange, Parallelize, Tile2D, Tile3D, Unroll, Skew, Reverse]


@dataclass(frozen=True)
class Schedule:
    commands: tuple[Transformation, ...]

    def __post_init__(self) -> None:
        if not self.commands:
            raise ValueError("a schedule must contain at least one command")

    def __str__(self) -> str:
        return "+".join(str(c) for c in self.commands)

    def __len__(self) -> int:
        return len(self.commands)


def print_schedule(schedule: Schedule) -> str:
    return str(schedule)


# ---------------------------------------------------------------------------
# schedule text parsing
# ---------------------------------------------------------------------------

_ARITY = {
    "Fuse": 2,
    "Interchange": 2,
    "Parallelize": 1,
    "Tile2D": 4,
    "Tile3D": 6,
    "Unroll": 2,
    "Skew": 2,
    "Reverse": 1,
}


class _SchedScanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def eof(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def take(self, pattern: str, what: str) -> str:
        self.skip_ws()
        m = re.compile(pattern).match(self.text, self.pos)
        if not m:
            found = self.text[self.pos : self.pos + 12] or "end of input"
            raise ScheduleParseError(f"expected {what}, found {found!r}", self.pos)
        self.pos = m.end()
        return m.group()

    def try_take(self, literal: str) -> bool:
        self.skip_ws()
        if self.text.startswith(literal, self.pos):
            self.pos += len(literal)
            return True
        return False


def _parse_level(sc: _SchedScanner) -> LoopLevel:
    tok = sc.take(r"L-1|L\d+", "a loop level like L0 or L-1")
    if tok == "L-1":
        return Innermost()
    return Depth(int(tok[1:]))


def _parse_factor(sc: _SchedScanner) -> int:
    start = sc.pos
    tok = sc.take(r"\d+", "a positive integer factor")
    value = int(tok)
    if value < 2:
        raise ScheduleParseError(f"factor must be >= 2, got {value}", start)
    return value


def _parse_comp(sc: _SchedScanner) -> str:
    return sc.take(r"comp\d{2}", "a comp_ID like comp00")


def parse_schedule(text: str) -> Schedule:
    """Parse command text (the content of a <schedule> tag) into a Schedule."""
    sc = _SchedScanner(text)
    commands: list[Transformation] = []
    while True:
        comp = _parse_comp(sc)
        sc.take(r"\.", "'.'")
        name_pos = sc.pos
        name = sc.take(r"[A-Za-z_][A-Za-z_0-9]*", "a transformation name")
        if name not in _ARITY:
            raise ScheduleParseError(f"unknown command name {name!r}", name_pos)
        sc.take(r"\(", "'('")
        args_pos = sc.pos
        try:
            if name == "Fuse":
                partner = _parse_comp(sc)
                sc.take(r",", "','")
                level = _parse_level(sc)
                cmd: Transformation = Fuse(comp, partner, level)
            elif name == "Interchange":
                l1 = _parse_level(sc)
                sc.take(r",", "','")
                l2 = _parse_level(sc)
                cmd = Interchange(comp, l1, l2)
            elif name == "Parallelize":
                cmd = Parallelize(comp, _parse_level(sc))
            elif name == "Tile2D":
                l1 = _parse_level(sc)
                sc.take(r",", "','")
                l2 = _parse_level(sc)
                sc.take(r",", "','")
                f1 = _parse_factor(sc)
                sc.take(r",", "','")
                f2 = _parse_factor(sc)
                cmd = Tile2D(comp, l1, l2, f1, f2)
            elif name == "Tile3D":
                l1 = _parse_level(sc)
                sc.take(r",", "','")
                l2 = _parse_level(sc)
                sc.take(r",", "','")
                l3 = _parse_level(sc)
                sc.take(r",", "','")
                f1 = _parse_factor(sc)
                sc.take(r",", "','")
                f2 = _parse_factor(sc)
                sc.take(r",", "','")
                f3 = _parse_factor(sc)
                cmd = Tile3D(comp, l1, l2, l3, f1, f2, f3)
            elif name == "Unroll":
                level = _parse_level(sc)
                sc.take(r",", "','")
                factor = _parse_factor(sc)
                cmd = Unroll(comp, level, factor)
            elif name == "Skew":
                l1 = _parse_level(sc)
                sc.take(r",", "','")
                l2 = _parse_level(sc)
                cmd = Skew(comp, l1, l2)
            else:  # Reverse
                cmd = Reverse(comp, _parse_level(sc))
        except ScheduleParseError as e:
            # wrong arity shows up as a missing ',' or ')' mid-arguments
            raise ScheduleParseError(f"{name}: {e.message}", e.pos) from None
        except ValueError as e:
            raise ScheduleParseError(f"{name}: {e}", args_pos) from None
        sc.take(r"\)", f"')' closing {name} (wrong number of arguments?)")
        commands.append(cmd)
        if sc.eof():
            break
        sc.take(r"\+", "'+' between commands")
    return Schedule(tuple(commands))


# ---------------------------------------------------------------------------
# model response parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleText:
    text: str


@dataclass(frozen=True)
class QuitCommand:
    pass


@dataclass(frozen=True)
class Unparseable:
    reason: str


Payload = Union[ScheduleText, QuitCommand, Unparseable]


@dataclass(frozen=True)
class LLMResponse:
    reasoning_text: str
    payload: Payload


def parse_response(message: str) -> LLMResponse:
    """Split a model reply into reasoning and payload. Total: malformed input
    yields an Unparseable payload with a human-readable reason."""
    open_idx = message.find(SCHEDULE_OPEN)
    if open_idx >= 0:
        close_idx = message.find(SCHEDULE_CLOSE, open_idx + len(SCHEDULE_OPEN))
        reasoning = message[:open_idx].strip()
        if close_idx < 0:
            return LLMResponse(reasoning, Unparseable("unterminated schedule tag"))
        inner = message[open_idx + len(SCHEDULE_OPEN) : close_idx]
        rest = message[close_idx + len(SCHEDULE_CLOSE) :]
        if SCHEDULE_OPEN in rest or SCHEDULE_CLOSE in rest or SCHEDULE_OPEN in inner:
            return LLMResponse(reasoning, Unparseable("more than one schedule tag pair"))
        if not inner.strip():
            return LLMResponse(reasoning, Unparseable("empty schedule tags"))
        return LLMResponse(reasoning, ScheduleText(inner))
    if QUIT_TOKEN in message:
        reasoning = message[: message.find(QUIT_TOKEN)].strip()
        return LLMResponse(reasoning, QuitCommand())
    return LLMResponse(message.strip(), Unparseable("no schedule tags or quit command found"))


# ---------------------------------------------------------------------------
# canonicalization
# ---------------------------------------------------------------------------


def canonicalize(schedule: Schedule, kernel) -> Schedule:
    """Resolve L-1 to concrete depths and rewrite comp_ID aliases that point
    at shared (post-fusion) loops to the lexicographically smaller member,
    preserving command order. Two schedules are the same exploration iff
    their canonical forms are equal. Requires a schedule that passed
    prevalidation; the structural dry-run owns the exact depth tracking.
    """
    from .transform import canonicalize_impl

    return canonicalize_impl(kernel, schedule)
