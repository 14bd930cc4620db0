"""Domain types and the propose/check attempt loop shared by every module."""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import lexing

SEVERITIES = ("error", "warning", "info")

# Constructs that make a proof compile while incomplete or unsound. "axiom"
# is reported as kind "axiom-introduction"; everything else by its own name.
DEFAULT_DENYLIST: tuple[str, ...] = (
    "sorry",
    "admit",
    "apply?",
    "exact?",
    "rw?",
    "simp?",
    "axiom",
    "#exit",
)

_THEOREM_HEADER = re.compile(r"\b(theorem|lemma)\s+([A-Za-z_][A-Za-z0-9_'.]*)")


class ProofLoopError(Exception):
    """Base class for this package's errors."""


class TargetNotFound(ProofLoopError):
    """The task's target theorem cannot be located in its file."""


class MalformedTheorem(ProofLoopError):
    """Text does not contain a recognizable theorem/lemma header."""


# ---------------------------------------------------------------------------
# Messages and tool calls (shared kernel; re-exported by proposer)


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant | tool
    content: str


MessageSequence = list[Message]


@dataclass(frozen=True)
class ToolCallRequest:
    tool: str
    arguments: dict[str, str] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Domain types


@dataclass
class TheoremTask:
    """A target theorem plus its enclosing file; the unit of benchmarking."""

    id: str
    target_theorem: str
    file_content: str
    dataset: str = "adhoc"
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.file_content.count(self.target_theorem) != 1:
            raise ValueError(
                f"task {self.id}: target theorem must occur exactly once in the file"
            )
        if not _THEOREM_HEADER.search(self.target_theorem):
            raise ValueError(
                f"task {self.id}: target must contain a named theorem/lemma header"
            )

    @classmethod
    def from_file(
        cls, path: str | Path, theorem_name: str, dataset: str = "adhoc"
    ) -> "TheoremTask":
        source = Path(path).read_text()
        start, end = locate_theorem(source, theorem_name)
        return cls(
            id=theorem_name,
            target_theorem=source[start:end],
            file_content=source,
            dataset=dataset,
            metadata={"file": str(path)},
        )


@dataclass
class ProofProposal:
    """Structured proposer output. Imports/opens are normalized and deduplicated."""

    reasoning: str
    imports: list[str]
    opens: list[str]
    updated_theorem: str

    def __post_init__(self) -> None:
        if not self.updated_theorem.strip():
            raise ValueError("proposal must carry a non-empty updated_theorem")
        self.imports = _dedupe(self.imports)
        self.opens = _dedupe(self.opens)


def _dedupe(items: Sequence[str]) -> list[str]:
    seen: dict[str, None] = {}
    for item in items:
        name = item.strip().strip('"').strip()
        if name:
            seen.setdefault(name)
    return list(seen)


@dataclass
class Diagnostic:
    file: str
    line: int
    column: int
    severity: str
    message: str

    def __post_init__(self) -> None:
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity {self.severity!r}")
        if self.line < 1:
            raise ValueError("diagnostic line numbers are 1-based")
        if self.column < 0:
            raise ValueError("diagnostic columns are 0-based")


@dataclass
class BuildFeedback:
    compiled: bool
    diagnostics: list[Diagnostic]
    goal_states: list[tuple[tuple[int, int], str]]
    raw_output: str = ""

    def __post_init__(self) -> None:
        if self.compiled and any(d.severity == "error" for d in self.diagnostics):
            raise ValueError("a compiled build cannot carry error diagnostics")


@dataclass
class ReviewVerdict:
    statement_preserved: bool  # check-1
    no_sorry: bool  # check-2
    no_other_issues: bool  # check-3
    approved: bool
    reasoning: str

    def __post_init__(self) -> None:
        if self.approved and not (
            self.statement_preserved and self.no_sorry and self.no_other_issues
        ):
            raise ValueError("approval requires all three checks to pass")


@dataclass
class AttemptRecord:
    iteration: int
    proposal: ProofProposal | None
    feedback: str
    tokens_in: int = 0
    tokens_out: int = 0
    tokens_thinking: int = 0
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        if self.iteration < 1:
            raise ValueError("iterations are 1-based")
        if min(self.tokens_in, self.tokens_out, self.tokens_thinking) < 0:
            raise ValueError("token counts are non-negative")


# ---------------------------------------------------------------------------
# Memory strategies and outcomes


@dataclass(frozen=True)
class NoMemory:
    pass


@dataclass(frozen=True)
class HistoryN:
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("history window must be >= 1")


@dataclass(frozen=True)
class SelfManaged:
    pass


MemoryStrategy = NoMemory | HistoryN | SelfManaged


@dataclass(frozen=True)
class Proved:
    iteration: int
    final_source: str


@dataclass(frozen=True)
class Exhausted:
    pass


@dataclass(frozen=True)
class Error:
    reason: str


Outcome = Proved | Exhausted | Error


@dataclass
class ProverConfig:
    max_iterations: int = 20
    memory: MemoryStrategy = field(default_factory=SelfManaged)
    tools_enabled: frozenset[str] = frozenset()
    thinking_budget: int = 10_000
    model: str = "mock-model"
    build_timeout: float = 300.0
    max_tool_calls: int = 4
    mode: str = "iterative"  # or "single_shot"
    lean_version: str = "4.24"
    denylist: tuple[str, ...] = DEFAULT_DENYLIST
    notes_cap: int = 4_000
    render_budget: int = 40_000

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("iteration budget must be >= 1")
        if self.build_timeout <= 0:
            raise ValueError("build timeout must be positive")
        if self.max_tool_calls < 0:
            raise ValueError("tool-call bound must be >= 0")
        if self.mode not in ("iterative", "single_shot"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "single_shot" and not isinstance(self.memory, NoMemory):
            raise ValueError("single-shot runs carry no memory")
        self.tools_enabled = frozenset(self.tools_enabled)


@dataclass
class ProofResult:
    task_id: str
    outcome: Outcome
    transcript: list[AttemptRecord]
    total_cost: float = 0.0


# ---------------------------------------------------------------------------
# Clocks and prices


class SystemClock:
    def now(self) -> float:
        return time.time()

    def perf(self) -> float:
        return time.monotonic()


class ConstantClock:
    """Deterministic clock for reproducible ledgers and tests."""

    def __init__(self, value: float = 0.0):
        self.value = value

    def now(self) -> float:
        return self.value

    def perf(self) -> float:
        return self.value


class MissingPrice(ProofLoopError):
    """The price table has no entry for a model appearing in the data."""


@dataclass(frozen=True)
class ModelPrice:
    input_per_mtok: float
    output_per_mtok: float
    thinking_per_mtok: float = 0.0


@dataclass(frozen=True)
class PriceTable:
    prices: Mapping[str, ModelPrice]

    def cost(
        self, model: str, tokens_in: int, tokens_out: int, tokens_thinking: int = 0
    ) -> float:
        if model not in self.prices:
            raise MissingPrice(f"no price entry for model {model!r}")
        p = self.prices[model]
        return (
            tokens_in * p.input_per_mtok
            + tokens_out * p.output_per_mtok
            + tokens_thinking * p.thinking_per_mtok
        ) / 1_000_000.0

    @classmethod
    def from_dict(cls, data: Mapping[str, Mapping[str, float]]) -> "PriceTable":
        return cls(
            {
                model: ModelPrice(
                    input_per_mtok=float(entry.get("input", 0.0)),
                    output_per_mtok=float(entry.get("output", 0.0)),
                    thinking_per_mtok=float(entry.get("thinking", 0.0)),
                )
                for model, entry in data.items()
            }
        )


@dataclass
class ServiceBundle:
    """Everything the loop talks to. All members must be concurrency-safe."""

    llm: Any
    leanenv: Any
    toolbox: Any = None
    reviewer_llm: Any = None
    reflection_llm: Any = None
    price_table: PriceTable | None = None
    clock: Any = field(default_factory=SystemClock)

    @property
    def reviewer(self) -> Any:
        return self.reviewer_llm if self.reviewer_llm is not None else self.llm

    @property
    def reflection(self) -> Any:
        return self.reflection_llm if self.reflection_llm is not None else self.llm


# ---------------------------------------------------------------------------
# Theorem location (used by tasks built from plain files)

_DECL_LINE = re.compile(
    r"^(?:@\[[^\]]*\]\s*)?(?:private\s+|protected\s+|noncomputable\s+)*"
    r"(theorem|lemma|def|abbrev|example|structure|inductive|instance|axiom)\b"
)


def locate_theorem(source: str, name: str) -> tuple[int, int]:
    """Span of the named theorem declaration, through its `sorry` body if any."""
    code = lexing.strip_comments(source)
    pattern = re.compile(r"\b(theorem|lemma)\s+" + re.escape(name) + r"(?![A-Za-z0-9_'])")
    match = pattern.search(code)
    if match is None:
        raise TargetNotFound(f"theorem {name!r} not found")
    start = match.start()

    starts = lexing.line_starts(source)
    next_decl = len(source)
    for line_no, offset in enumerate(starts):
        if offset <= start:
            continue
        line = code[offset : starts[line_no + 1] if line_no + 1 < len(starts) else None]
        if _DECL_LINE.match(line):
            next_decl = offset
            break

    for hit in lexing.scan_tokens(source, ("sorry", "admit")):
        if start < hit.start < next_decl:
            return start, hit.end
    return start, len(source[:next_decl].rstrip())


# ---------------------------------------------------------------------------
# Config fingerprinting and cost


def config_to_dict(config: ProverConfig) -> dict[str, Any]:
    data = asdict(config)
    data["tools_enabled"] = sorted(config.tools_enabled)
    data["denylist"] = list(config.denylist)
    if isinstance(config.memory, NoMemory):
        data["memory"] = {"strategy": "none"}
    elif isinstance(config.memory, HistoryN):
        data["memory"] = {"strategy": "history", "n": config.memory.n}
    else:
        data["memory"] = {"strategy": "self_managed"}
    return data


def config_fingerprint(config: ProverConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def transcript_cost(
    transcript: Sequence[AttemptRecord], model: str, price_table: PriceTable | None
) -> float:
    if price_table is None:
        return 0.0
    return sum(
        price_table.cost(model, a.tokens_in, a.tokens_out, a.tokens_thinking)
        for a in transcript
    )


# ---------------------------------------------------------------------------
# The attempt loop


def summarize_cycle(outcome: Any) -> str:
    """One-line status for progress streams."""
    if outcome is None:
        return "malformed proposal"
    if isinstance(outcome, BuildFeedback):
        if not outcome.compiled:
            errors = sum(1 for d in outcome.diagnostics if d.severity == "error")
            return f"build failed ({errors} error{'s' if errors != 1 else ''})"
        return f"sorries remain ({len(outcome.goal_states)})"
    if isinstance(outcome, ReviewVerdict):
        if outcome.approved:
            return "proved (reviewer approved)"
        if not outcome.statement_preserved or not outcome.no_sorry or not outcome.no_other_issues:
            return f"rejected: {outcome.reasoning.splitlines()[0][:100]}"
    return "rejected"


def run_attempt_loop(
    task: TheoremTask,
    config: ProverConfig,
    services: ServiceBundle,
    on_attempt: Callable[[AttemptRecord, Any], None] | None = None,
) -> ProofResult:
    """Run up to ``config.max_iterations`` propose/check cycles on one task.

    The first cycle whose candidate compiles, passes the deterministic
    loophole gate, and is approved by the reviewer wins. Failed cycles feed
    their rendered feedback through the memory strategy before the next
    propose call. Per-cycle failures (compile errors, rejections, malformed
    proposals) are feedback; only unrecoverable service failures produce an
    Error outcome.
    """
    from . import memory as memory_mod
    from .leanenv import WorkspaceError
    from .llm import LLMUnavailable, TokenUsage
    from .proposer import ProposalParseError, propose
    from .review import assemble_candidate, render_feedback, review_proposal

    limits = memory_mod.MemoryLimits(
        notes_cap=config.notes_cap, render_budget=config.render_budget
    )
    state = memory_mod.initial_state(config.memory)
    transcript: list[AttemptRecord] = []
    clock = services.clock

    def result(outcome: Outcome) -> ProofResult:
        cost = transcript_cost(transcript, config.model, services.price_table)
        return ProofResult(task.id, outcome, transcript, cost)

    for iteration in range(1, config.max_iterations + 1):
        started = clock.perf()
        usage = TokenUsage()
        proposal: ProofProposal | None = None
        cycle: Any = None
        try:
            fragments = memory_mod.render(state, limits)
            proposed = propose(task, fragments, config, services.llm, services.toolbox)
            proposal = proposed.proposal
            usage.add(proposed.usage)
            cycle = review_proposal(
                task, proposal, services.leanenv, services.reviewer, config, usage=usage
            )
            feedback = render_feedback(cycle)
        except ProposalParseError as exc:
            usage.add(exc.usage)
            feedback = f"malformed proposal: {exc}"
        except (LLMUnavailable, WorkspaceError) as exc:
            attempt = AttemptRecord(
                iteration=iteration,
                proposal=proposal,
                feedback=f"unrecoverable service failure: {exc}",
                tokens_in=usage.tokens_in,
                tokens_out=usage.tokens_out,
                tokens_thinking=usage.tokens_thinking,
                wall_time=clock.perf() - started,
            )
            transcript.append(attempt)
            if on_attempt:
                on_attempt(attempt, None)
            return result(Error(f"{type(exc).__name__}: {exc}"))

        attempt = AttemptRecord(
            iteration=iteration,
            proposal=proposal,
            feedback=feedback,
            tokens_in=usage.tokens_in,
            tokens_out=usage.tokens_out,
            tokens_thinking=usage.tokens_thinking,
            wall_time=0.0,
        )

        if isinstance(cycle, ReviewVerdict) and cycle.approved:
            attempt.wall_time = clock.perf() - started
            transcript.append(attempt)
            if on_attempt:
                on_attempt(attempt, cycle)
            final = assemble_candidate(task, proposal).source
            return result(Proved(iteration=iteration, final_source=final))

        state = memory_mod.update(
            state, attempt, services.reflection, limits=limits, usage=usage
        )
        attempt.tokens_in = usage.tokens_in
        attempt.tokens_out = usage.tokens_out
        attempt.tokens_thinking = usage.tokens_thinking
        attempt.wall_time = clock.perf() - started
        transcript.append(attempt)
        if on_attempt:
            on_attempt(attempt, cycle)

    return result(Exhausted())
