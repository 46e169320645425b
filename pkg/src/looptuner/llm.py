"""Chat-model gateway: HTTP client, scripted replayer, token accounting.

Providers expose one operation, send(history) -> (assistant message, usage).
The HTTP provider targets the de-facto chat-completions wire shape
(messages array, optional temperature, usage object) so any compatible
endpoint works. The scripted provider replays a recorded transcript
verbatim and verifies the live dialogue matches the recording, enabling
bit-reproducible end-to-end runs against the simulated backend.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


@dataclass(frozen=True)
class LLMProviderConfig:
    endpoint: str = ""
    model: str = ""
    temperature: Optional[float] = None  # None: provider default
    max_output_tokens: Optional[int] = None
    retries: int = 2
    backoff_s: float = 1.0
    api_key_env: str = "LOOPTUNER_API_KEY"

    def __post_init__(self) -> None:
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.temperature is not None and not (0.0 <= self.temperature <= 2.0):
            raise ValueError("temperature must be in [0, 2]")


class TransportError(RuntimeError):
    """Provider/transport failure, distinct from any schedule outcome."""


class ScriptMismatchError(TransportError):
    def __init__(self, turn_index: int, detail: str):
        super().__init__(f"transcript mismatch at turn {turn_index}: {detail}")
        self.turn_index = turn_index


class Provider(Protocol):
    def send(self, history: Sequence[ChatMessage]) -> tuple[ChatMessage, TokenUsage]: ...


def _validate_history(history: Sequence[ChatMessage]) -> None:
    if not history:
        raise ValueError("history must be non-empty")
    if history[0].role != "system":
        raise ValueError("the first message of a dialogue must have role 'system'")


class HttpProvider:
    """Chat-completions client with bounded retries and key redaction."""

    def __init__(
        self,
        cfg: LLMProviderConfig,
        session=None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not cfg.endpoint:
            raise ValueError("HTTP provider requires an endpoint URL")
        self.cfg = cfg
        if session is None:
            import requests

            session = requests.Session()
        self.session = session
        self.sleep = sleep

    def send(self, history: Sequence[ChatMessage]) -> tuple[ChatMessage, TokenUsage]:
        _validate_history(history)
        cfg = self.cfg
        body: dict = {
            "model": cfg.model,
            "messages": [m.to_dict() for m in history],
        }
        if cfg.temperature is not None:
            body["temperature"] = cfg.temperature
        if cfg.max_output_tokens is not None:
            body["max_tokens"] = cfg.max_output_tokens
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        logger.debug("POST %s body=%s", cfg.endpoint, json.dumps(body)[:2000])

        last_error: Exception | None = None
        for attempt in range(cfg.retries + 1):
            if attempt:
                self.sleep(cfg.backoff_s * (2 ** (attempt - 1)))
            try:
                resp = self.session.post(
                    cfg.endpoint, json=body, headers=headers, timeout=120
                )
            except Exception as e:  # network-level failure
                last_error = e
                logger.debug("transport error (attempt %d): %s", attempt, e)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = TransportError(f"provider status {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise TransportError(
                    f"provider error status {resp.status_code}: {resp.text[:500]}"
                )
            try:
                payload = resp.json()
                content = payload["choices"][0]["message"]["content"]
            except Exception as e:
                raise TransportError(f"malformed provider response: {e}") from e
            usage = payload.get("usage") or {}
            tu = TokenUsage(
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)),
            )
            logger.debug("reply %d tokens in / %d out", tu.input_tokens, tu.output_tokens)
            return ChatMessage("assistant", content), tu
        raise TransportError(f"provider unreachable after {cfg.retries + 1} attempts: {last_error}")


@dataclass(frozen=True)
class ScriptTurn:
    reply: str
    usage: TokenUsage = field(default_factory=TokenUsage)
    # prompt messages the recording expects to have been appended before this
    # turn; None disables verification for the turn
    expected_new_messages: Optional[tuple[ChatMessage, ...]] = None


class ScriptedProvider:
    """Replays recorded assistant turns, verifying the dialogue matches."""

    def __init__(self, turns: Sequence[ScriptTurn]):
        self.turns = list(turns)
        self.cursor = 0
        self._verified: list[ChatMessage] = []

    @classmethod
    def from_replies(
        cls, replies: Sequence[str], usages: Sequence[TokenUsage] | None = None
    ) -> "ScriptedProvider":
        usages = list(usages or [])
        turns = [
            ScriptTurn(r, usages[i] if i < len(usages) else TokenUsage(10, 10))
            for i, r in enumerate(replies)
        ]
        return cls(turns)

    def send(self, history: Sequence[ChatMessage]) -> tuple[ChatMessage, TokenUsage]:
        _validate_history(history)
        if self.cursor >= len(self.turns):
            raise TransportError("script exhausted")
        turn = self.turns[self.cursor]
        if turn.expected_new_messages is not None:
            expected = self._verified + list(turn.expected_new_messages)
            for i, want in enumerate(expected):
                if i >= len(history):
                    raise ScriptMismatchError(i, "live history is shorter than recorded")
                got = history[i]
                if got.role != want.role or got.content != want.content:
                    raise ScriptMismatchError(
                        i, f"recorded {want.role} message differs from live history"
                    )
            if len(history) != len(expected):
                raise ScriptMismatchError(
                    len(expected), "live history is longer than recorded"
                )
            self._verified = expected
        else:
            self._verified = list(history)
        reply = ChatMessage("assistant", turn.reply)
        self._verified.append(reply)
        self.cursor += 1
        return reply, turn.usage
