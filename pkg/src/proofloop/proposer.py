"""Prompt assembly, the single tool round, and structured-proposal parsing."""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from . import prompts
from .core import (
    Message,
    MessageSequence,
    ProofLoopError,
    ProofProposal,
    ProverConfig,
    TheoremTask,
    ToolCallRequest,
)
from .llm import LLMReply, TokenUsage, call_with_retries

MODES = ("iterative", "single_shot")

TOOL_REFUSAL = (
    "Tool call refused: the single tool round has already been used. "
    "Return the final structured proposal now."
)
TOOL_LIMIT_REFUSAL = "Tool call refused: per-round tool call limit reached."


class ProposalParseError(ProofLoopError):
    """Structured output missing its required fields; consumes an iteration."""

    def __init__(self, detail: str, usage: TokenUsage | None = None):
        super().__init__(detail)
        self.usage = usage or TokenUsage()


@dataclass
class ProposeResult:
    proposal: ProofProposal
    usage: TokenUsage
    tool_rounds: int
    messages: MessageSequence


def assemble_messages(
    task: TheoremTask,
    memory_render: Sequence[str],
    mode: str,
    lean_version: str = "4.24",
) -> MessageSequence:
    """System prompt, target user prompt, then any memory fragments, in order."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "single_shot" and memory_render:
        raise ValueError("single-shot prompts carry no memory fragments")
    system_name = (
        "proposer_system_single_shot" if mode == "single_shot" else "proposer_system_iterative"
    )
    messages = [
        Message("system", prompts.render(system_name, lean_version=lean_version)),
        Message(
            "user",
            prompts.render(
                "proposer_user",
                target_theorem=task.target_theorem,
                complete_file=task.file_content,
            ),
        ),
    ]
    messages.extend(Message("user", fragment) for fragment in memory_render)
    return messages


def execute_tool_round(requests: Sequence[ToolCallRequest], toolbox) -> list[Message]:
    """Dispatch all requests concurrently; results keep request order."""
    if not requests:
        return []
    with ThreadPoolExecutor(max_workers=len(requests)) as pool:
        texts = list(pool.map(toolbox.dispatch, requests))
    return [Message("tool", text) for text in texts]


# ---------------------------------------------------------------------------
# Structured-output parsing

_FENCE = re.compile(r"```(?:lean|json)?\s*\n(.*?)```", re.S)
_FIELD_HEADER = re.compile(
    r"^[ \t]*(?:\*\*)?(reasoning|imports|opens|updated_theorem)(?:\*\*)?[ \t]*:",
    re.M,
)


def _unfence(text: str) -> str:
    match = _FENCE.search(text)
    if match:
        return match.group(1).strip()
    return text.strip()


def _parse_name_list(raw: str) -> list[str]:
    raw = raw.strip()
    if not raw:
        return []
    if raw.startswith("["):
        body = raw[1 : raw.index("]")] if "]" in raw else raw[1:]
        try:
            loaded = json.loads("[" + body + "]")
            return [str(x) for x in loaded]
        except ValueError:
            pass  # tolerate unquoted entries like [Mathlib.Tactic]
        return [p.strip().strip("\"'") for p in body.split(",") if p.strip()]
    return [p.strip().strip("\"'") for p in re.split(r"[,\n]", raw) if p.strip()]


def _from_json(raw: str) -> ProofProposal | None:
    candidate = _unfence(raw) if raw.lstrip().startswith("```") else raw.strip()
    start = candidate.find("{")
    end = candidate.rfind("}")
    if start == -1 or end <= start:
        return None
    try:
        data = json.loads(candidate[start : end + 1], strict=False)
    except ValueError:
        return None
    if not isinstance(data, dict) or "updated_theorem" not in data:
        return None
    updated = data.get("updated_theorem")
    if not isinstance(updated, str) or not updated.strip():
        raise ProposalParseError("updated_theorem is empty")
    imports = data.get("imports") or []
    opens = data.get("opens") or []
    if isinstance(imports, str):
        imports = _parse_name_list(imports)
    if isinstance(opens, str):
        opens = _parse_name_list(opens)
    return ProofProposal(
        reasoning=str(data.get("reasoning", "")),
        imports=[str(x) for x in imports],
        opens=[str(x) for x in opens],
        updated_theorem=_unfence(updated),
    )


def _from_field_headers(raw: str) -> ProofProposal | None:
    matches = list(_FIELD_HEADER.finditer(raw))
    if not matches:
        return None
    sections: dict[str, str] = {}
    for idx, match in enumerate(matches):
        end = matches[idx + 1].start() if idx + 1 < len(matches) else len(raw)
        sections.setdefault(match.group(1), raw[match.end() : end].strip())
    updated = sections.get("updated_theorem", "")
    if not updated.strip():
        return None
    return ProofProposal(
        reasoning=sections.get("reasoning", ""),
        imports=_parse_name_list(sections.get("imports", "")),
        opens=_parse_name_list(sections.get("opens", "")),
        updated_theorem=_unfence(updated),
    )


def parse_proposal(raw_llm_output: str) -> ProofProposal:
    """Extract the four proposal fields from structured LLM output.

    Accepts provider-native JSON or the field-header text layout; a fenced
    ```lean block inside updated_theorem is unwrapped to bare source. Missing
    imports/opens default to empty lists.
    """
    if not raw_llm_output or not raw_llm_output.strip():
        raise ProposalParseError("empty output")
    proposal = _from_json(raw_llm_output)
    if proposal is None:
        proposal = _from_field_headers(raw_llm_output)
    if proposal is None:
        raise ProposalParseError("updated_theorem is missing")
    return proposal


# ---------------------------------------------------------------------------
# The propose pass


def propose(
    task: TheoremTask,
    memory_render: Sequence[str],
    config: ProverConfig,
    llm,
    toolbox=None,
) -> ProposeResult:
    """One assemble → (optional single tool round) → final-generation pass."""
    usage = TokenUsage()
    messages = assemble_messages(
        task, memory_render, config.mode, lean_version=config.lean_version
    )
    tools = tuple(sorted(config.tools_enabled))

    def generate(msgs: MessageSequence, allowed: tuple[str, ...]) -> LLMReply:
        reply = call_with_retries(
            lambda: llm.complete(
                msgs,
                tools=allowed,
                model=config.model,
                thinking_budget=config.thinking_budget,
            )
        )
        usage.add(reply.usage)
        return reply

    reply = generate(messages, tools)
    tool_rounds = 0
    if reply.tool_calls and toolbox is not None:
        tool_rounds = 1
        allowed = list(reply.tool_calls[: config.max_tool_calls])
        overflow = reply.tool_calls[config.max_tool_calls :]
        messages = messages + [Message("assistant", reply.text or "(requesting tools)")]
        messages += execute_tool_round(allowed, toolbox)
        messages += [Message("tool", TOOL_LIMIT_REFUSAL) for _ in overflow]
        reply = generate(messages, ())
        if reply.tool_calls:
            # A second round is refused mechanically; force a final answer.
            messages = messages + [Message("user", TOOL_REFUSAL)]
            reply = generate(messages, ())

    try:
        proposal = parse_proposal(reply.text)
    except ProposalParseError as exc:
        raise ProposalParseError(str(exc), usage=usage) from exc
    return ProposeResult(proposal=proposal, usage=usage, tool_rounds=tool_rounds, messages=messages)
