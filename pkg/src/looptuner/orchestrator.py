"""Dialogue orchestration: context initialization, the propose/check/execute/
feedback loop, novelty-based iteration counting, quit-push policy, and run
record emission.

An iteration (T) is counted only when a novel schedule is explored: a parsed
proposal whose canonical form (or normalized text, when it fails the
pre-filter) has not been seen before. Duplicates, unparseable replies and
quit turns consume exchanges but not iterations. The dialogue ends on a
quit past the push budget, at T = max_iterations, or at the exchange cap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

from . import prompts
from .backend import (
    BackendConfig,
    CompilerCrash,
    ExecBackend,
    RuntimeCrash,
    Success,
    Timeout,
)
from .ir import Kernel, anonymize, print_kernel, render_for_prompt
from .legality import Illegal, Legal, SolverFailure, check_legal
from .llm import ChatMessage, Provider, TokenUsage, TransportError
from .records import (
    ExchangeRecord,
    LogicalClock,
    RECORD_VERSION,
    RunRecord,
    WallClock,
    kernel_hash,
)
from .schedule import (
    QuitCommand,
    Schedule,
    ScheduleParseError,
    ScheduleText,
    Unparseable,
    canonicalize,
    parse_response,
    parse_schedule,
    print_schedule,
)
from .transform import apply_schedule, prevalidate

logger = logging.getLogger(__name__)

FEEDBACK_CATEGORIES = ("invalid", "illegal", "solver_failure", "compiler_crash", "success")


@dataclass(frozen=True)
class OrchestratorConfig:
    max_iterations: int = 30
    max_quit_pushes: int = 5
    max_exchanges: int = 90
    feedback_enabled: bool = True
    analysis_phase_enabled: bool = True
    reasoning_required: bool = True
    hardware_in_prompt: bool = True
    hardware_description: Optional[str] = None

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.max_exchanges < self.max_iterations:
            raise ValueError("max_exchanges must be >= max_iterations")
        if self.max_quit_pushes < 0:
            raise ValueError("max_quit_pushes must be >= 0")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class FeedbackMessage:
    category: str  # one of FEEDBACK_CATEGORIES
    text: str
    payload: Union[str, float]

    def __post_init__(self) -> None:
        if self.category not in FEEDBACK_CATEGORIES:
            raise ValueError(f"unknown feedback category {self.category!r}")
        if (self.category == "success") != isinstance(self.payload, float):
            raise ValueError("success feedback carries a speedup, others a reason")


@dataclass
class DialogueState:
    history: list[ChatMessage]
    explored: set[str]
    iteration: int  # T: number of distinct schedules explored
    quit_count: int
    exchanges: int
    best: Optional[tuple[str, float]]  # (canonical schedule, speedup)
    baseline_ms: float
    cum_usage: TokenUsage


@dataclass
class QuitEvent:
    terminate: bool


class Dialogue:
    """One optimization dialogue over a single kernel."""

    def __init__(
        self,
        kernel: Kernel,
        cfg: OrchestratorConfig,
        provider: Provider,
        backend: ExecBackend,
        clock=None,
    ):
        self.cfg = cfg
        self.provider = provider
        self.backend = backend
        if clock is None:
            deterministic = backend.cfg.mode == "simulated"
            clock = LogicalClock() if deterministic else WallClock()
        self.clock = clock
        self.kernel, self.name_map = anonymize(kernel)
        self.state: Optional[DialogueState] = None
        self.record: Optional[RunRecord] = None
        self._pending: list[ChatMessage] = []  # prompt delta for the next exchange

    # -- helpers --------------------------------------------------------------

    def _append(self, msg: ChatMessage) -> None:
        self.state.history.append(msg)
        self._pending.append(msg)

    def _send(self) -> ChatMessage:
        # the prompt delta of this exchange is everything appended since the
        # previous send; feedback added afterwards belongs to the next one
        self._prompt_delta = self._pending
        self._pending = []
        reply, usage = self.provider.send(tuple(self.state.history))
        self.state.history.append(reply)
        self.state.exchanges += 1
        self.state.cum_usage = self.state.cum_usage + usage
        self._last_usage = usage
        return reply

    def _record_exchange(self, reply: ChatMessage, **fields) -> ExchangeRecord:
        st = self.state
        rec = ExchangeRecord(
            index=st.exchanges,
            new_messages=[m.to_dict() for m in self._prompt_delta],
            assistant_text=reply.content,
            input_tokens=self._last_usage.input_tokens,
            output_tokens=self._last_usage.output_tokens,
            cum_input_tokens=st.cum_usage.input_tokens,
            cum_output_tokens=st.cum_usage.output_tokens,
            t_after=st.iteration,
            best_after=max(1.0, st.best[1]) if st.best else 1.0,
            ts=self.clock.now(),
            **fields,
        )
        self.record.exchanges.append(rec)
        return rec

    def _user_turn(self, feedback_text: str) -> None:
        """Append the outcome message, or the content-free continuation when
        feedback is disabled (the outcome is still recorded)."""
        text = feedback_text if self.cfg.feedback_enabled else prompts.CONTINUATION_PROMPT
        self._append(ChatMessage("user", text))

    # -- spec operations --------------------------------------------------------

    def initialize_context(self, baseline_ms: float) -> DialogueState:
        cfg = self.cfg
        system = prompts.build_system_prompt(
            hardware_in_prompt=cfg.hardware_in_prompt,
            hardware_description=cfg.hardware_description,
            analysis_phase_enabled=cfg.analysis_phase_enabled,
            reasoning_required=cfg.reasoning_required,
        )
        self.state = DialogueState(
            history=[],
            explored=set(),
            iteration=0,
            quit_count=0,
            exchanges=0,
            best=None,
            baseline_ms=baseline_ms,
            cum_usage=TokenUsage(),
        )
        self.record = RunRecord(
            v=RECORD_VERSION,
            kernel_name=self.kernel.name,
            kernel_hash=kernel_hash(print_kernel(self.kernel)),
            config={
                "orchestrator": cfg.to_dict(),
                "backend": {
                    k: v for k, v in self.backend.cfg.__dict__.items()
                },
            },
            baseline_ms=baseline_ms,
        )
        self._append(ChatMessage("system", system))
        self._append(ChatMessage("user", render_for_prompt(self.kernel, baseline_ms)))
        if cfg.analysis_phase_enabled:
            self._append(ChatMessage("user", prompts.ANALYSIS_REQUEST))
            reply = self._send()
            self._record_exchange(reply, payload_kind="analysis", kind="analysis")
            self._append(ChatMessage("user", prompts.BEGIN_INSTRUCTION))
        else:
            self._append(ChatMessage("user", prompts.BEGIN_INSTRUCTION))
        return self.state

    def handle_quit(self) -> QuitEvent:
        st = self.state
        if st.quit_count < self.cfg.max_quit_pushes:
            st.quit_count += 1
            self._append(ChatMessage("user", prompts.QUIT_PUSH_PROMPT))
            return QuitEvent(terminate=False)
        return QuitEvent(terminate=True)

    def step(self) -> tuple[ExchangeRecord, Optional[QuitEvent]]:
        """One provider exchange plus the full outcome pipeline."""
        st = self.state
        reply = self._send()
        resp = parse_response(reply.content)

        if isinstance(resp.payload, QuitCommand):
            event = self.handle_quit()
            rec = self._record_exchange(
                reply,
                payload_kind="quit",
                kind="quit" if event.terminate else "quit_push",
            )
            return rec, event

        if isinstance(resp.payload, Unparseable):
            self._user_turn(
                prompts.feedback_text("invalid", reason=resp.payload.reason)
            )
            rec = self._record_exchange(
                reply,
                payload_kind="unparseable",
                kind="unparseable",
                reason=resp.payload.reason,
            )
            return rec, None

        raw = resp.payload.text
        schedule: Optional[Schedule] = None
        canonical_text: Optional[str] = None
        invalid_reason: Optional[str] = None
        try:
            schedule = parse_schedule(raw)
        except ScheduleParseError as e:
            invalid_reason = str(e)
            novelty_key = " ".join(raw.split())
        if schedule is not None:
            bad = prevalidate(schedule, self.kernel)
            if bad is not None:
                invalid_reason = str(bad)
                novelty_key = print_schedule(schedule)
            else:
                canonical_text = print_schedule(canonicalize(schedule, self.kernel))
                novelty_key = canonical_text

        if novelty_key in st.explored:
            self._user_turn(prompts.DUPLICATE_NOTICE)
            rec = self._record_exchange(
                reply,
                payload_kind="schedule",
                kind="duplicate",
                schedule_text=raw,
                canonical=canonical_text,
            )
            return rec, None

        # novel proposal: counts as an iteration whatever its outcome
        st.explored.add(novelty_key)
        st.iteration += 1

        if invalid_reason is not None:
            self._user_turn(prompts.feedback_text("invalid", reason=invalid_reason))
            rec = self._record_exchange(
                reply,
                payload_kind="schedule",
                kind="proposal",
                schedule_text=raw,
                category="invalid",
                reason=invalid_reason,
                novel=True,
            )
            return rec, None

        verdict = check_legal(self.kernel, schedule)
        if isinstance(verdict, Illegal):
            self._user_turn(prompts.feedback_text("illegal", reason=verdict.reason))
            rec = self._record_exchange(
                reply,
                payload_kind="schedule",
                kind="proposal",
                schedule_text=raw,
                canonical=canonical_text,
                category="illegal",
                reason=verdict.reason,
                novel=True,
            )
            return rec, None
        if isinstance(verdict, SolverFailure):
            self._user_turn(
                prompts.feedback_text("solver_failure", reason=verdict.reason)
            )
            rec = self._record_exchange(
                reply,
                payload_kind="schedule",
                kind="proposal",
                schedule_text=raw,
                canonical=canonical_text,
                category="solver_failure",
                reason=verdict.reason,
                novel=True,
            )
            return rec, None

        tk = apply_schedule(self.kernel, schedule, list(verdict.solver_results))
        result = self.backend.run_schedule(tk, st.baseline_ms)
        if isinstance(result, Success):
            if st.best is None or result.speedup > st.best[1]:
                st.best = (canonical_text, result.speedup)
            self._user_turn(
                prompts.feedback_text(
                    "success",
                    speedup=result.speedup,
                    time_ms=result.time_ms,
                    baseline_ms=st.baseline_ms,
                )
            )
            rec = self._record_exchange(
                reply,
                payload_kind="schedule",
                kind="proposal",
                schedule_text=raw,
                canonical=canonical_text,
                category="success",
                backend_variant="success",
                speedup=result.speedup,
                time_ms=result.time_ms,
                min_time_ms=result.min_ms,
                novel=True,
            )
            return rec, None

        variant = {
            CompilerCrash: "compiler_crash",
            RuntimeCrash: "runtime_crash",
            Timeout: "timeout",
        }[type(result)]
        self._user_turn(
            prompts.feedback_text("compiler_crash", reason=result.message)
        )
        rec = self._record_exchange(
            reply,
            payload_kind="schedule",
            kind="proposal",
            schedule_text=raw,
            canonical=canonical_text,
            category="compiler_crash",
            backend_variant=variant,
            reason=result.message,
            novel=True,
        )
        return rec, None

    # -- the driver --------------------------------------------------------------

    def run(self) -> RunRecord:
        st_start = self.clock.now()
        try:
            baseline_ms = self.backend.measure_baseline(self.kernel)
        except Exception as e:
            raise TransportError(f"baseline measurement failed: {e}") from e
        self.initialize_context(baseline_ms)
        reason = None
        try:
            while True:
                if self.state.iteration >= self.cfg.max_iterations:
                    reason = "iteration limit"
                    break
                if self.state.exchanges >= self.cfg.max_exchanges:
                    reason = "conversation limit"
                    break
                _rec, event = self.step()
                if event is not None and event.terminate:
                    reason = "quit"
                    break
        except TransportError as e:
            logger.warning("dialogue aborted: %s", e)
            reason = "aborted"
        rec = self.record
        rec.terminal_reason = reason
        rec.iterations = self.state.iteration
        rec.total_exchanges = self.state.exchanges
        rec.cum_input_tokens = self.state.cum_usage.input_tokens
        rec.cum_output_tokens = self.state.cum_usage.output_tokens
        rec.wall_ms = (self.clock.now() - st_start) * (
            1000.0 if not getattr(self.clock, "deterministic", False) else 1.0
        )
        if self.state.best is not None:
            rec.best_schedule, rec.best_speedup = self.state.best
        rec.incomplete = reason == "aborted"
        return rec


def run_dialogue(
    kernel: Kernel,
    cfg: OrchestratorConfig,
    provider: Provider,
    backend: ExecBackend | BackendConfig,
    clock=None,
) -> RunRecord:
    """Drive one full optimization dialogue and return its run record."""
    if isinstance(backend, BackendConfig):
        backend = ExecBackend(backend)
    return Dialogue(kernel, cfg, provider, backend, clock).run()
