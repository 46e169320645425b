"""Run records: the line-delimited trajectory file of one dialogue.

Format v1: one JSON object per line. First line is the header (kernel id,
config snapshot, baseline time); then one object per exchange carrying the
prompt messages appended since the previous exchange, the raw assistant
text, the parsed payload classification, the outcome category, speedup,
token usage and timestamps; finally one `final` object with the terminal
reason and the best result. Records are self-contained transcripts: the
scripted provider replays them, and replays against the simulated backend
reproduce the file byte for byte (timestamps come from a logical clock in
deterministic runs).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .llm import ChatMessage, ScriptTurn, ScriptedProvider, TokenUsage

RECORD_VERSION = 1


class WallClock:
    deterministic = False

    def now(self) -> float:
        return time.time()


class LogicalClock:
    """Counts exchanges instead of reading wall time; replays are byte-stable."""

    deterministic = True

    def __init__(self) -> None:
        self._t = 0.0

    def now(self) -> float:
        self._t += 1.0
        return self._t


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class ExchangeRecord:
    index: int
    new_messages: list[dict]  # prompt messages appended since the last exchange
    assistant_text: str
    payload_kind: str  # "schedule" | "quit" | "unparseable"
    kind: str  # "analysis" | "proposal" | "duplicate" | "unparseable" | "quit_push" | "quit"
    schedule_text: Optional[str] = None
    canonical: Optional[str] = None
    category: Optional[str] = None  # five-way taxonomy, set for novel proposals
    backend_variant: Optional[str] = None
    reason: Optional[str] = None
    speedup: Optional[float] = None
    time_ms: Optional[float] = None
    min_time_ms: Optional[float] = None
    novel: bool = False
    t_after: int = 0
    best_after: float = 1.0
    input_tokens: int = 0
    output_tokens: int = 0
    cum_input_tokens: int = 0
    cum_output_tokens: int = 0
    ts: float = 0.0

    def to_dict(self) -> dict:
        return {"type": "exchange", **self.__dict__}

    @classmethod
    def from_dict(cls, d: dict) -> "ExchangeRecord":
        d = {k: v for k, v in d.items() if k != "type"}
        return cls(**d)


@dataclass
class RunRecord:
    v: int
    kernel_name: str
    kernel_hash: str
    config: dict
    baseline_ms: float
    exchanges: list[ExchangeRecord] = field(default_factory=list)
    terminal_reason: Optional[str] = None  # "quit" | "iteration limit" | "conversation limit" | "aborted"
    best_schedule: Optional[str] = None
    best_speedup: Optional[float] = None
    iterations: int = 0
    total_exchanges: int = 0
    cum_input_tokens: int = 0
    cum_output_tokens: int = 0
    wall_ms: float = 0.0
    incomplete: bool = True

    def best_series(self) -> list[float]:
        """Best-so-far speedup indexed by T (T=0 is the original code)."""
        series = [1.0]
        best = 1.0
        for ex in self.exchanges:
            if ex.novel:
                if ex.category == "success" and ex.speedup is not None:
                    best = max(best, ex.speedup)
                series.append(best)
        return series

    def categories(self) -> list[str]:
        return [ex.category for ex in self.exchanges if ex.novel]

    def to_jsonl(self) -> str:
        lines = [
            _dumps(
                {
                    "type": "header",
                    "v": self.v,
                    "kernel_name": self.kernel_name,
                    "kernel_hash": self.kernel_hash,
                    "config": self.config,
                    "baseline_ms": self.baseline_ms,
                }
            )
        ]
        lines += [_dumps(ex.to_dict()) for ex in self.exchanges]
        lines.append(
            _dumps(
                {
                    "type": "final",
                    "terminal_reason": self.terminal_reason,
                    "best_schedule": self.best_schedule,
                    "best_speedup": self.best_speedup,
                    "iterations": self.iterations,
                    "total_exchanges": self.total_exchanges,
                    "cum_input_tokens": self.cum_input_tokens,
                    "cum_output_tokens": self.cum_output_tokens,
                    "wall_ms": self.wall_ms,
                    "incomplete": self.incomplete,
                }
            )
        )
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


class RecordFormatError(ValueError):
    pass


def load_run_record(path: str | Path) -> RunRecord:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise RecordFormatError(f"{path}: empty record")
    header = json.loads(lines[0])
    if header.get("type") != "header":
        raise RecordFormatError(f"{path}: first line is not a header")
    if header.get("v") != RECORD_VERSION:
        raise RecordFormatError(
            f"{path}: record version {header.get('v')} does not match "
            f"supported version {RECORD_VERSION}"
        )
    rec = RunRecord(
        v=header["v"],
        kernel_name=header["kernel_name"],
        kernel_hash=header["kernel_hash"],
        config=header["config"],
        baseline_ms=header["baseline_ms"],
    )
    for line in lines[1:]:
        obj = json.loads(line)
        if obj.get("type") == "exchange":
            rec.exchanges.append(ExchangeRecord.from_dict(obj))
        elif obj.get("type") == "final":
            rec.terminal_reason = obj["terminal_reason"]
            rec.best_schedule = obj["best_schedule"]
            rec.best_speedup = obj["best_speedup"]
            rec.iterations = obj["iterations"]
            rec.total_exchanges = obj["total_exchanges"]
            rec.cum_input_tokens = obj["cum_input_tokens"]
            rec.cum_output_tokens = obj["cum_output_tokens"]
            rec.wall_ms = obj["wall_ms"]
            rec.incomplete = obj["incomplete"]
        else:
            raise RecordFormatError(f"{path}: unknown record line type {obj.get('type')}")
    return rec


def kernel_hash(source_text: str) -> str:
    return hashlib.sha256(source_text.encode("utf-8")).hexdigest()[:16]


def config_hash(config: dict) -> str:
    return hashlib.sha256(_dumps(config).encode("utf-8")).hexdigest()[:16]


def scripted_provider(record: RunRecord | str | Path) -> ScriptedProvider:
    """Build a replaying provider from a recorded run. Each recorded exchange
    contributes its prompt delta (verified against the live dialogue) and the
    assistant reply with its recorded token usage."""
    if not isinstance(record, RunRecord):
        record = load_run_record(record)
    turns = []
    for ex in record.exchanges:
        turns.append(
            ScriptTurn(
                reply=ex.assistant_text,
                usage=TokenUsage(ex.input_tokens, ex.output_tokens),
                expected_new_messages=tuple(
                    ChatMessage(m["role"], m["content"]) for m in ex.new_messages
                ),
            )
        )
    return ScriptedProvider(turns)
