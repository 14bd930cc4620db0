"""LLM client backends: a deterministic scripted client and a thin HTTP client.

Every module in this package talks to language models through the small
``complete(messages, ...) -> LLMReply`` surface so tests run fully offline.
Token counts are always whatever the client reports, never estimated.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import requests

from .core import Message, MessageSequence, ProofLoopError, ToolCallRequest

RETRY_ATTEMPTS = 3
RETRY_BASE_DELAY = 0.5


class LLMError(ProofLoopError):
    pass


class LLMTransportError(LLMError):
    """Transient transport failure; eligible for retry."""


class LLMUnavailable(LLMError):
    """The client gave up (retries exhausted, bad credentials, empty script)."""


@dataclass
class TokenUsage:
    tokens_in: int = 0
    tokens_out: int = 0
    tokens_thinking: int = 0

    def add(self, other: "TokenUsage") -> None:
        self.tokens_in += other.tokens_in
        self.tokens_out += other.tokens_out
        self.tokens_thinking += other.tokens_thinking


@dataclass
class LLMReply:
    text: str = ""
    tool_calls: list[ToolCallRequest] = field(default_factory=list)
    tokens_in: int = 0
    tokens_out: int = 0
    tokens_thinking: int = 0

    @property
    def usage(self) -> TokenUsage:
        return TokenUsage(self.tokens_in, self.tokens_out, self.tokens_thinking)


def call_with_retries(
    fn: Callable[[], LLMReply],
    attempts: int = RETRY_ATTEMPTS,
    base_delay: float = RETRY_BASE_DELAY,
    sleep: Callable[[float], None] = time.sleep,
) -> LLMReply:
    """Retry ``fn`` on transport errors with exponential backoff."""
    last: LLMTransportError | None = None
    for attempt in range(attempts):
        try:
            return fn()
        except LLMTransportError as exc:
            last = exc
            if attempt + 1 < attempts:
                sleep(base_delay * (2**attempt))
    raise LLMUnavailable(f"llm call failed after {attempts} attempts: {last}")


# ---------------------------------------------------------------------------
# Reply builders (shared by tests, scripts, and script files)


def proposal_reply(
    updated_theorem: str,
    reasoning: str = "",
    imports: Sequence[str] = (),
    opens: Sequence[str] = (),
    tokens_in: int = 0,
    tokens_out: int = 0,
    tokens_thinking: int = 0,
) -> LLMReply:
    body = json.dumps(
        {
            "reasoning": reasoning,
            "imports": list(imports),
            "opens": list(opens),
            "updated_theorem": updated_theorem,
        }
    )
    return LLMReply(
        text=body,
        tokens_in=tokens_in,
        tokens_out=tokens_out,
        tokens_thinking=tokens_thinking,
    )


def reviewer_reply(
    check1: bool,
    check2: bool,
    check3: bool,
    reasoning: str = "",
    tokens_in: int = 0,
    tokens_out: int = 0,
) -> LLMReply:
    body = json.dumps(
        {
            "check1": check1,
            "check2": check2,
            "check3": check3,
            "approved": check1 and check2 and check3,
            "reasoning": reasoning,
        }
    )
    return LLMReply(text=body, tokens_in=tokens_in, tokens_out=tokens_out)


def text_reply(text: str, **tokens: int) -> LLMReply:
    return LLMReply(text=text, **tokens)


def tool_call_reply(*requests: ToolCallRequest, **tokens: int) -> LLMReply:
    return LLMReply(tool_calls=list(requests), **tokens)


# ---------------------------------------------------------------------------
# Scripted client


_THEOREM_NAME = re.compile(r"\b(?:theorem|lemma)\s+([A-Za-z_][A-Za-z0-9_']*)")
# ordered by reliability: explicit target blocks, then code blocks, then prose
_KEY_SCOPES = (r"<target>\n(.*?)</target>", r"```lean\n(.*?)```", r"<code>\n(.*?)</code>", None)


def key_by_theorem_name(messages: MessageSequence) -> str:
    """Default script key: the theorem/lemma name the conversation is about."""
    users = [m.content for m in messages if m.role == "user"]
    for scope_pattern in _KEY_SCOPES:
        for content in users:
            if scope_pattern is None:
                scope = content
            else:
                scoped = re.search(scope_pattern, content, re.S)
                if not scoped:
                    continue
                scope = scoped.group(1)
            match = _THEOREM_NAME.search(scope)
            if match:
                return match.group(1)
    return ""


class ScriptedLLM:
    """Deterministic replay client: a FIFO script, or per-key FIFO scripts.

    Keyed scripts make concurrent and resumed runs reproducible: each task's
    replies are consumed independently of scheduling order. ``repeat_last``
    keeps returning the final reply once a script is exhausted, which is how
    "always fails the same way" behaviours are modelled.
    """

    def __init__(
        self,
        replies: Sequence[LLMReply] | None = None,
        keyed: dict[str, Sequence[LLMReply]] | None = None,
        key_fn: Callable[[MessageSequence], str] | None = None,
        repeat_last: bool = False,
    ):
        if replies is not None and keyed is not None:
            raise ValueError("pass either a FIFO script or keyed scripts, not both")
        self._fifo = list(replies) if replies is not None else None
        self._keyed = {k: list(v) for k, v in (keyed or {}).items()}
        self._key_fn = key_fn or key_by_theorem_name
        self._repeat_last = repeat_last
        self._last: dict[str, LLMReply] = {}
        self._lock = threading.Lock()
        self.calls: list[tuple[MessageSequence, tuple[str, ...]]] = []

    def complete(
        self,
        messages: MessageSequence,
        *,
        tools: Sequence[str] = (),
        model: str = "",
        thinking_budget: int = 0,
        seed: int | None = None,
    ) -> LLMReply:
        with self._lock:
            self.calls.append((list(messages), tuple(tools)))
            if self._fifo is not None:
                key, script = "", self._fifo
            else:
                key = self._key_fn(messages)
                if key not in self._keyed:
                    raise LLMUnavailable(f"no script for key {key!r}")
                script = self._keyed[key]
            if script:
                reply = script.pop(0)
                self._last[key] = reply
                return reply
            if self._repeat_last and key in self._last:
                return self._last[key]
            raise LLMUnavailable(f"script exhausted (key {key!r})")

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedLLM":
        """Load a script file (see README for the schema)."""
        data = json.loads(Path(path).read_text())
        if data.get("schema") != 1:
            raise ValueError(f"{path}: unsupported script schema")

        def build(raw: dict[str, Any]) -> LLMReply:
            calls = [
                ToolCallRequest(tool=c["tool"], arguments=dict(c.get("arguments", {})))
                for c in raw.get("tool_calls", [])
            ]
            return LLMReply(
                text=raw.get("text", ""),
                tool_calls=calls,
                tokens_in=int(raw.get("tokens_in", 0)),
                tokens_out=int(raw.get("tokens_out", 0)),
                tokens_thinking=int(raw.get("tokens_thinking", 0)),
            )

        if "keyed" in data:
            keyed = {k: [build(r) for r in v] for k, v in data["keyed"].items()}
            return cls(keyed=keyed, repeat_last=bool(data.get("repeat_last", False)))
        replies = [build(r) for r in data.get("replies", [])]
        return cls(replies=replies, repeat_last=bool(data.get("repeat_last", False)))


class EchoLLM:
    """Safe default backend: proposes the target theorem back, verbatim.

    Useful for demonstrating the loop without credentials; nothing it
    produces can ever be approved (the echoed target still contains `sorry`).
    """

    def complete(
        self,
        messages: MessageSequence,
        *,
        tools: Sequence[str] = (),
        model: str = "",
        thinking_budget: int = 0,
        seed: int | None = None,
    ) -> LLMReply:
        target = ""
        for message in messages:
            match = re.search(r"<target>\n(.*?)\n</target>", message.content, re.S)
            if match:
                target = match.group(1)
                break
        if not target:
            return LLMReply(text="{}")
        return proposal_reply(target, reasoning="echoing the target unchanged")


# ---------------------------------------------------------------------------
# HTTP client (chat-completions wire format)

_TOOL_SCHEMAS = {
    "library_search": {
        "type": "function",
        "function": {
            "name": "library_search",
            "description": "Search Mathlib for lemmas relevant to a goal or statement.",
            "parameters": {
                "type": "object",
                "properties": {
                    "query": {"type": "string"},
                    "limit": {"type": "integer"},
                },
                "required": ["query"],
            },
        },
    },
    "web_search": {
        "type": "function",
        "function": {
            "name": "web_search",
            "description": "Search the web for proof strategies or identities.",
            "parameters": {
                "type": "object",
                "properties": {"query": {"type": "string"}},
                "required": ["query"],
            },
        },
    },
}


class HttpLLM:
    """Minimal chat-completions client (OpenAI-style wire format).

    Credentials come only from the environment variable named by
    ``api_key_env``; provider-specific knobs go through ``extra`` and are
    merged into the payload verbatim.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "PROOFLOOP_API_KEY",
        structured: bool = True,
        timeout: float = 120.0,
        extra: dict[str, Any] | None = None,
        session: Any = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.structured = structured
        self.timeout = timeout
        self.extra = dict(extra or {})
        self._session = session or requests.Session()

    def complete(
        self,
        messages: MessageSequence,
        *,
        tools: Sequence[str] = (),
        model: str = "",
        thinking_budget: int = 0,
        seed: int | None = None,
    ) -> LLMReply:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise LLMUnavailable(f"environment variable {self.api_key_env} is not set")
        payload: dict[str, Any] = {
            "model": model,
            "messages": [self._wire_message(m) for m in messages],
        }
        if tools:
            payload["tools"] = [_TOOL_SCHEMAS[t] for t in tools if t in _TOOL_SCHEMAS]
        if self.structured:
            payload["response_format"] = {"type": "json_object"}
        if thinking_budget:
            payload["thinking_budget"] = thinking_budget
        if seed is not None:
            payload["seed"] = seed
        payload.update(self.extra)

        try:
            response = self._session.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise LLMTransportError(str(exc)) from exc
        if response.status_code >= 500 or response.status_code == 429:
            raise LLMTransportError(f"provider returned {response.status_code}")
        if response.status_code >= 400:
            raise LLMUnavailable(f"provider returned {response.status_code}")

        try:
            data = response.json()
            message = data["choices"][0]["message"]
        except (ValueError, LookupError) as exc:
            raise LLMTransportError(f"malformed provider response: {exc}") from exc

        calls = []
        for raw in message.get("tool_calls") or []:
            fn = raw.get("function", {})
            try:
                arguments = json.loads(fn.get("arguments") or "{}")
            except ValueError:
                arguments = {}
            calls.append(
                ToolCallRequest(
                    tool=fn.get("name", ""),
                    arguments={k: str(v) for k, v in arguments.items()},
                )
            )
        usage = data.get("usage", {}) or {}
        details = usage.get("completion_tokens_details", {}) or {}
        return LLMReply(
            text=message.get("content") or "",
            tool_calls=calls,
            tokens_in=int(usage.get("prompt_tokens", 0)),
            tokens_out=int(usage.get("completion_tokens", 0)),
            tokens_thinking=int(details.get("reasoning_tokens", 0)),
        )

    @staticmethod
    def _wire_message(message: Message) -> dict[str, str]:
        if message.role == "tool":
            # Our message model does not track provider tool-call ids, so tool
            # results travel as user turns.
            return {"role": "user", "content": f"Tool result:\n{message.content}"}
        return {"role": message.role, "content": message.content}
