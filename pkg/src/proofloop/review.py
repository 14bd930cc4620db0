"""Turn a proposal into a verdict: candidate assembly, sorry stripping,
deterministic loophole/statement checks, and the reviewer agent.

The deterministic checks run before any reviewer call and short-circuit it:
the LLM reviewer is an additional safety layer, never the only gate.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Sequence

from . import lexing, prompts
from .core import (
    DEFAULT_DENYLIST,
    BuildFeedback,
    MalformedTheorem,
    Message,
    ProofProposal,
    ProverConfig,
    ReviewVerdict,
    TargetNotFound,
    TheoremTask,
)
from .leanenv import extract_goal_states
from .llm import TokenUsage, call_with_retries

SORRY_TOKENS = ("sorry", "admit")


@dataclass
class CandidateFile:
    source: str
    sorry_sites: list[tuple[int, int]]  # positions in the pre-strip source
    target_span: tuple[int, int]

    def __post_init__(self) -> None:
        start, end = self.target_span
        if not (0 <= start <= end <= len(self.source)):
            raise ValueError("target span out of bounds")


@dataclass(frozen=True)
class Violation:
    kind: str
    line: int
    excerpt: str


@dataclass
class LoopholeReport:
    violations: list[Violation]

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


# ---------------------------------------------------------------------------
# Candidate assembly

_IMPORT_LINE = re.compile(r"^import\s+(\S+)\s*$")
_OPEN_LINE = re.compile(r"^open\s+(.+?)\s*$")


def _existing_imports(lines: Sequence[str]) -> tuple[set[str], int | None]:
    """Module names already imported and the index of the last import line."""
    names: set[str] = set()
    last: int | None = None
    for idx, line in enumerate(lines):
        match = _IMPORT_LINE.match(line)
        if match:
            names.add(match.group(1))
            last = idx
    return names, last


def _existing_opens(lines: Sequence[str]) -> tuple[set[str], int | None]:
    names: set[str] = set()
    last: int | None = None
    for idx, line in enumerate(lines):
        match = _OPEN_LINE.match(line)
        if not match:
            continue
        tokens = match.group(1).split()
        if "in" in tokens:  # scoped `open ... in` does not export namespaces
            continue
        names.update(tokens)
        last = idx
    return names, last


def assemble_candidate(task: TheoremTask, proposal: ProofProposal) -> CandidateFile:
    """Inject missing imports/opens and splice the updated theorem in place.

    Existing imports keep their order; new ones are appended after the import
    block (opens likewise, after the opens). Outside the injected lines and
    the target span the file is byte-identical to the original.
    """
    original = task.file_content
    if original.count(task.target_theorem) != 1:
        raise TargetNotFound(f"target theorem not found exactly once in task {task.id}")
    theorem_at = original.index(task.target_theorem)

    lines = original.splitlines(keepends=True)
    offsets = [0]
    for line in lines:
        offsets.append(offsets[-1] + len(line))
    # detect headers on comment-stripped text (same line geometry)
    detect_lines = lexing.strip_comments(original).splitlines()
    have_imports, last_import = _existing_imports(detect_lines)
    have_opens, last_open = _existing_opens(detect_lines)

    new_imports = [m for m in proposal.imports if m not in have_imports]
    new_opens = [n for n in proposal.opens if n not in have_opens]

    import_line = 0 if last_import is None else last_import + 1
    import_pos = offsets[import_line]
    open_line = import_line if last_open is None else last_open + 1
    open_pos = max(offsets[open_line], import_pos)

    import_text = "".join(f"import {m}\n" for m in new_imports)
    open_text = "".join(f"open {n}\n" for n in new_opens)
    if import_pos == len(original) and original and not original.endswith("\n"):
        import_text = "\n" + import_text if import_text else import_text
    if open_pos == len(original) and original and not original.endswith("\n"):
        open_text = "\n" + open_text if open_text else open_text

    if open_pos > import_pos:
        with_headers = (
            original[:import_pos]
            + import_text
            + original[import_pos:open_pos]
            + open_text
            + original[open_pos:]
        )
    else:  # shared insertion point: opens go right after the new imports
        with_headers = (
            original[:import_pos] + import_text + open_text + original[import_pos:]
        )

    inserted_before = 0
    if import_pos <= theorem_at:
        inserted_before += len(import_text)
    if open_pos <= theorem_at:
        inserted_before += len(open_text)
    start = theorem_at + inserted_before
    assembled = (
        with_headers[:start]
        + proposal.updated_theorem
        + with_headers[start + len(task.target_theorem) :]
    )
    span = (start, start + len(proposal.updated_theorem))
    sites = [
        (hit.line, hit.column) for hit in lexing.scan_tokens(assembled, SORRY_TOKENS)
    ]
    return CandidateFile(source=assembled, sorry_sites=sites, target_span=span)


# ---------------------------------------------------------------------------
# Sorry stripping and loopholes


def strip_sorries(candidate: CandidateFile) -> tuple[str, list[tuple[int, int]]]:
    """Delete every `sorry`/`admit` token in code position.

    Comment, string, and identifier occurrences are untouched; recorded
    positions refer to the pre-strip source. Idempotent.
    """
    hits = lexing.scan_tokens(candidate.source, SORRY_TOKENS)
    stripped = lexing.remove_spans(candidate.source, [(h.start, h.end) for h in hits])
    return stripped, [(h.line, h.column) for h in hits]


def _kind_for(token: str) -> str:
    return "axiom-introduction" if token == "axiom" else token


def detect_loopholes(
    source: str, denylist: tuple[str, ...] = DEFAULT_DENYLIST
) -> LoopholeReport:
    """Report every token-level denylist occurrence in code position."""
    lines = source.splitlines()
    violations = [
        Violation(
            kind=_kind_for(hit.token),
            line=hit.line,
            excerpt=lines[hit.line - 1].strip() if hit.line - 1 < len(lines) else "",
        )
        for hit in lexing.scan_tokens(source, tuple(denylist))
    ]
    return LoopholeReport(violations=violations)


def proposal_source(proposal: ProofProposal) -> str:
    """The proposal's own contribution: injected headers plus its theorem."""
    parts = [f"import {m}" for m in proposal.imports]
    parts += [f"open {n}" for n in proposal.opens]
    parts.append(proposal.updated_theorem)
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# Statement preservation

_HEADER_RE = re.compile(r"\b(theorem|lemma)\b")
_OPENERS = {"(": ")", "[": "]", "{": "}", "⟨": "⟩", "⦃": "⦄"}
_CLOSERS = set(_OPENERS.values())


def theorem_signature(text: str) -> str:
    """Normalized signature: keyword through the ``:=``/``by`` that opens the
    proof, after comment removal and whitespace collapse."""
    code = lexing.strip_comments(text)
    match = _HEADER_RE.search(code)
    if match is None:
        raise MalformedTheorem("no theorem/lemma header found")
    start = match.start()
    depth = 0
    i = start
    n = len(code)
    end = n
    while i < n:
        ch = code[i]
        if ch == '"':
            i += 1
            while i < n and code[i] != '"':
                i += 2 if code[i] == "\\" else 1
            i += 1
            continue
        if ch in _OPENERS:
            depth += 1
        elif ch in _CLOSERS:
            depth = max(depth - 1, 0)
        elif depth == 0:
            if code.startswith(":=", i):
                end = i
                break
            if (
                code.startswith("by", i)
                and (i == 0 or not lexing.is_ident_char(code[i - 1]))
                and (i + 2 >= n or not lexing.is_ident_char(code[i + 2]))
            ):
                end = i
                break
        i += 1
    return " ".join(code[start:end].split())


def check_statement_preserved(original_theorem: str, updated_theorem: str) -> bool:
    return theorem_signature(original_theorem) == theorem_signature(updated_theorem)


# ---------------------------------------------------------------------------
# Deterministic check layer


@dataclass
class DeterministicChecks:
    statement_preserved: bool
    no_sorry: bool
    no_other_issues: bool
    violations: list[Violation]
    notes: str

    @property
    def passed(self) -> bool:
        return self.statement_preserved and self.no_sorry and self.no_other_issues


def evaluate_checks(
    task_theorem: str,
    proposal: ProofProposal,
    denylist: tuple[str, ...] = DEFAULT_DENYLIST,
) -> DeterministicChecks:
    """The deterministic halves of the reviewer's three checks."""
    notes: list[str] = []
    try:
        statement_ok = check_statement_preserved(task_theorem, proposal.updated_theorem)
        if not statement_ok:
            notes.append("theorem statement was modified (signature mismatch)")
    except MalformedTheorem as exc:
        statement_ok = False
        notes.append(f"malformed theorem header: {exc}")
    report = detect_loopholes(proposal_source(proposal), denylist)
    sorry_violations = [v for v in report.violations if v.kind in SORRY_TOKENS]
    other_violations = [v for v in report.violations if v.kind not in SORRY_TOKENS]
    notes.extend(f"{v.kind} at line {v.line}: {v.excerpt}" for v in report.violations)
    return DeterministicChecks(
        statement_preserved=statement_ok,
        no_sorry=not sorry_violations,
        no_other_issues=not other_violations,
        violations=report.violations,
        notes="; ".join(notes),
    )


def synthetic_verdict(checks: DeterministicChecks) -> ReviewVerdict:
    return ReviewVerdict(
        statement_preserved=checks.statement_preserved,
        no_sorry=checks.no_sorry,
        no_other_issues=checks.no_other_issues,
        approved=False,
        reasoning=f"deterministic check failed: {checks.notes}",
    )


# ---------------------------------------------------------------------------
# Reviewer agent

_BOOL_FIELD = re.compile(r"check(?P<num>[123])\s*[:=]\s*(?P<val>true|false)", re.I)
_APPROVED_FIELD = re.compile(r"approved\s*[:=]\s*(?P<val>true|false)", re.I)
_REASONING_FIELD = re.compile(r'reasoning\s*[:=]\s*"?(?P<val>[^"\n]*)"?', re.I)


def parse_reviewer_reply(raw: str) -> tuple[bool, bool, bool, str] | None:
    """(check1, check2, check3, reasoning), or None if unparseable."""
    start, end = raw.find("{"), raw.rfind("}")
    if start != -1 and end > start:
        try:
            data = json.loads(raw[start : end + 1], strict=False)
            if isinstance(data, dict) and {"check1", "check2", "check3"} <= set(data):
                return (
                    bool(data["check1"]),
                    bool(data["check2"]),
                    bool(data["check3"]),
                    str(data.get("reasoning", "")),
                )
        except ValueError:
            pass
    found = {m.group("num"): m.group("val").lower() == "true" for m in _BOOL_FIELD.finditer(raw)}
    if {"1", "2", "3"} <= set(found):
        reasoning = ""
        match = _REASONING_FIELD.search(raw)
        if match:
            reasoning = match.group("val").strip()
        return found["1"], found["2"], found["3"], reasoning
    return None


def run_reviewer(
    task_theorem: str,
    proposed_proof: str,
    llm: Any,
    usage: TokenUsage | None = None,
) -> ReviewVerdict:
    messages = [
        Message("system", prompts.load_template("reviewer_system")),
        Message(
            "user",
            prompts.render(
                "reviewer_user",
                original_theorem=task_theorem,
                proposed_proof=proposed_proof,
            ),
        ),
    ]
    reply = call_with_retries(lambda: llm.complete(messages))
    if usage is not None:
        usage.add(reply.usage)
    parsed = parse_reviewer_reply(reply.text)
    if parsed is None:
        return ReviewVerdict(
            statement_preserved=False,
            no_sorry=False,
            no_other_issues=False,
            approved=False,
            reasoning="reviewer output was unparseable",
        )
    check1, check2, check3, reasoning = parsed
    return ReviewVerdict(
        statement_preserved=check1,
        no_sorry=check2,
        no_other_issues=check3,
        approved=check1 and check2 and check3,
        reasoning=reasoning,
    )


# ---------------------------------------------------------------------------
# The full pipeline


def review_proposal(
    task: TheoremTask,
    proposal: ProofProposal,
    leanenv: Any,
    llm: Any,
    config: ProverConfig,
    usage: TokenUsage | None = None,
) -> BuildFeedback | ReviewVerdict:
    """assemble → strip → build, then deterministic checks, then the reviewer.

    Build failures and surviving sorries come back as BuildFeedback; a
    deterministic failure yields an unapproved verdict without an LLM call.
    """
    candidate = assemble_candidate(task, proposal)
    stripped, sites = strip_sorries(candidate)
    relative_path = f"{task.id}/Candidate.lean"
    report = leanenv.build(relative_path, stripped, timeout=config.build_timeout)

    if not report.success:
        goal_states = (
            extract_goal_states(report.diagnostics, sites, file_hint="Candidate.lean")
            if sites
            else []
        )
        return BuildFeedback(
            compiled=False,
            diagnostics=report.diagnostics,
            goal_states=goal_states,
            raw_output=report.raw_output,
        )
    if sites:
        goal_states = extract_goal_states(
            report.diagnostics, sites, file_hint="Candidate.lean"
        )
        return BuildFeedback(
            compiled=True,
            diagnostics=report.diagnostics,
            goal_states=goal_states,
            raw_output=report.raw_output,
        )

    checks = evaluate_checks(task.target_theorem, proposal, config.denylist)
    if not checks.passed:
        return synthetic_verdict(checks)
    return run_reviewer(task.target_theorem, proposal.updated_theorem, llm, usage=usage)


# ---------------------------------------------------------------------------
# Feedback rendering


def render_feedback(outcome: BuildFeedback | ReviewVerdict) -> str:
    """Flatten a cycle outcome into the feedback text the proposer will see."""
    if isinstance(outcome, ReviewVerdict):
        if outcome.approved:
            return "Reviewer approved the proof."
        return (
            "Reviewer rejected the proof.\n"
            f"statement preserved: {outcome.statement_preserved}; "
            f"no sorry: {outcome.no_sorry}; "
            f"no other issues: {outcome.no_other_issues}\n"
            f"reasoning: {outcome.reasoning}"
        )

    lines: list[str] = []
    errors = [d for d in outcome.diagnostics if d.severity == "error"]
    if not outcome.compiled:
        lines.append("Build failed.")
        for diag in errors:
            lines.append(f"line {diag.line}: {diag.message}")
        if not errors and outcome.raw_output.strip():
            lines.append("No structured diagnostics; raw build output tail:")
            lines.append(outcome.raw_output.strip()[-2000:])
    else:
        lines.append(
            f"Build succeeded but {len(outcome.goal_states)} sorry placeholder(s) remain."
        )
    if outcome.goal_states:
        lines.append("Goal states at sorry locations:")
        for index, ((line, column), goal) in enumerate(outcome.goal_states, start=1):
            lines.append(f"sorry #{index} at line {line}, column {column}:\n{goal}")
    return "\n".join(lines)
