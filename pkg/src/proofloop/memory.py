"""The three between-iteration memory strategies and their prompt rendering.

Memory only shapes the next prompt; full transcripts are always persisted by
the loop and the run ledger regardless of strategy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

from . import prompts
from .core import AttemptRecord, HistoryN, MemoryStrategy, NoMemory
from .llm import LLMError, Message, TokenUsage

TRUNCATION_MARK = "[truncated to fit context budget]"


@dataclass(frozen=True)
class MemoryLimits:
    notes_cap: int = 4_000
    render_budget: int = 40_000


@dataclass(frozen=True)
class MemoryState:
    strategy: MemoryStrategy
    attempts: tuple[AttemptRecord, ...] = ()
    notes: str = ""


def initial_state(strategy: MemoryStrategy) -> MemoryState:
    return MemoryState(strategy=strategy)


def _attempt_code(attempt: AttemptRecord) -> str:
    if attempt.proposal is None:
        return "(malformed proposal)"
    return attempt.proposal.updated_theorem


def _attempt_reasoning(attempt: AttemptRecord) -> str:
    return attempt.proposal.reasoning if attempt.proposal is not None else ""


def update(
    state: MemoryState,
    attempt: AttemptRecord,
    llm: Any,
    *,
    limits: MemoryLimits = MemoryLimits(),
    usage: TokenUsage | None = None,
) -> MemoryState:
    """Fold one finished attempt into the memory state."""
    strategy = state.strategy
    if isinstance(strategy, NoMemory):
        return state
    if isinstance(strategy, HistoryN):
        kept = (state.attempts + (attempt,))[-strategy.n :]
        return replace(state, attempts=kept)

    messages = [
        Message("system", prompts.load_template("context_summary_system")),
        Message(
            "user",
            prompts.render(
                "context_summary_user",
                reasoning=_attempt_reasoning(attempt),
                code=_attempt_code(attempt),
                feedback=attempt.feedback,
                previous_context=state.notes,
            ),
        ),
    ]
    try:
        reply = llm.complete(messages)
    except LLMError:
        # Reflection is best-effort: keep what we had, leave a trace.
        notes = state.notes + f"\n[reflection failed at iteration {attempt.iteration}]"
        return replace(state, notes=notes.strip()[: limits.notes_cap])
    if usage is not None:
        usage.add(reply.usage)
    return replace(state, notes=reply.text.strip()[: limits.notes_cap])


def _render_attempt(attempt: AttemptRecord) -> str:
    return prompts.render(
        "attempt",
        reasoning=_attempt_reasoning(attempt),
        code=_attempt_code(attempt),
        feedback=attempt.feedback,
    )


def _clip(text: str, budget: int) -> str:
    if len(text) <= budget:
        return text
    keep = max(budget - len(TRUNCATION_MARK) - 1, 0)
    return (text[:keep] + "\n" + TRUNCATION_MARK)[:budget]


def render(state: MemoryState, limits: MemoryLimits = MemoryLimits()) -> list[str]:
    """Prompt fragments contributed by memory, each one a user message."""
    strategy = state.strategy
    if isinstance(strategy, NoMemory):
        return []

    if isinstance(strategy, HistoryN):
        attempts = list(state.attempts)
        if not attempts:
            return []
        while attempts:
            blocks = [_render_attempt(a) for a in reversed(attempts)]
            if len(attempts) == 1:
                fragment = prompts.render("previous_attempt_user", attempt=blocks[0])
            else:
                fragment = prompts.render(
                    "past_attempts_user", previous_attempts="\n\n".join(blocks)
                )
            if len(fragment) <= limits.render_budget:
                return [fragment]
            if len(attempts) == 1:
                return [_clip(fragment, limits.render_budget)]
            attempts.pop(0)  # drop oldest first
        return []

    if not state.notes:
        return []
    fragment = prompts.render("experience_user", experience=state.notes)
    if len(fragment) > limits.render_budget:
        overshoot = len(fragment) - len(state.notes)
        notes = _clip(state.notes, max(limits.render_budget - overshoot, 0))
        fragment = _clip(
            prompts.render("experience_user", experience=notes), limits.render_budget
        )
    return [fragment]
