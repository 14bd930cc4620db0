"""Lean workspace management: builds with timeouts, diagnostic parsing, and
goal-state extraction, plus a scripted mock backend so every other module
tests without a toolchain.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .core import Diagnostic, ProofLoopError

DEFAULT_BUILD_COMMAND = ("lake", "env", "lean", "{file}")
UNSOLVED_GOALS = "unsolved goals"


class WorkspaceError(ProofLoopError):
    """The build command cannot be spawned or the workspace is unusable."""


@dataclass(frozen=True)
class Workspace:
    root: Path
    toolchain: str = ""
    build_command: tuple[str, ...] = DEFAULT_BUILD_COMMAND
    scratch_dir: str = "scratch"


@dataclass
class BuildReport:
    success: bool
    diagnostics: list[Diagnostic] = field(default_factory=list)
    duration: float = 0.0
    timed_out: bool = False
    raw_output: str = ""

    def __post_init__(self) -> None:
        if self.timed_out and self.success:
            raise ValueError("a timed-out build cannot be a success")


# ---------------------------------------------------------------------------
# Diagnostic parsing

_DIAG_LINE = re.compile(
    r"^(?P<file>[^:\n][^:\n]*?):(?P<line>\d+):(?P<col>\d+):\s*"
    r"(?P<sev>[A-Za-z]+):\s?(?P<msg>.*)$"
)


def parse_diagnostics(raw_output: str) -> list[Diagnostic]:
    """Parse ``path:line:col: severity: message`` diagnostics from build text.

    Lines that do not open a diagnostic are appended to the open diagnostic's
    message (multi-line goal blocks); matching lines with unknown severities
    are ignored; leading noise before the first diagnostic is dropped.
    """
    diagnostics: list[Diagnostic] = []
    current: Diagnostic | None = None
    for line in raw_output.splitlines():
        match = _DIAG_LINE.match(line)
        if match:
            severity = match.group("sev").lower()
            if severity in ("error", "warning", "info"):
                current = Diagnostic(
                    file=match.group("file"),
                    line=int(match.group("line")),
                    column=int(match.group("col")),
                    severity=severity,
                    message=match.group("msg"),
                )
                diagnostics.append(current)
            continue
        if current is not None:
            current.message += "\n" + line
    return diagnostics


def format_diagnostics(diagnostics: Sequence[Diagnostic]) -> str:
    """Inverse of parse_diagnostics on the Diagnostic model."""
    lines: list[str] = []
    for diag in diagnostics:
        message_lines = diag.message.split("\n")
        lines.append(
            f"{diag.file}:{diag.line}:{diag.column}: {diag.severity}: {message_lines[0]}"
        )
        lines.extend(message_lines[1:])
    return "\n".join(lines)


def extract_goal_states(
    diagnostics: Sequence[Diagnostic],
    sorry_sites: Sequence[tuple[int, int]],
    file_hint: str | None = None,
) -> list[tuple[tuple[int, int], str]]:
    """Pair each sorry site with the nearest unsolved-goals diagnostic at or
    after it; each diagnostic is consumed at most once, and unmatched sites
    report "no goal reported".
    """
    candidates = [
        d
        for d in diagnostics
        if UNSOLVED_GOALS in d.message
        and (file_hint is None or d.file.endswith(file_hint) or file_hint in d.file)
    ]
    candidates.sort(key=lambda d: (d.line, d.column))
    used = [False] * len(candidates)
    paired: list[tuple[tuple[int, int], str]] = []
    for site in sorted(sorry_sites):
        text = "no goal reported"
        for idx, diag in enumerate(candidates):
            if used[idx]:
                continue
            if (diag.line, diag.column) >= site:
                used[idx] = True
                text = _goal_text(diag.message)
                break
        paired.append((site, text))
    return paired


def _goal_text(message: str) -> str:
    remainder = message.split(UNSOLVED_GOALS, 1)[1].strip() if UNSOLVED_GOALS in message else ""
    return remainder or message.strip()


# ---------------------------------------------------------------------------
# Real backend


class LakeBuildBackend:
    """Runs the workspace build command on per-task scratch files.

    A bounded semaphore caps concurrent builds (Lean builds are memory
    hungry); within one task loop builds are sequential anyway, so per-task
    FIFO ordering is inherent.
    """

    def __init__(self, workspace: Workspace, max_concurrent: int | None = None):
        self.workspace = workspace
        limit = max_concurrent or max((os.cpu_count() or 2) // 2, 1)
        self._slots = threading.BoundedSemaphore(limit)

    def build(self, relative_path: str, source: str, timeout: float) -> BuildReport:
        if not source:
            raise WorkspaceError("refusing to build an empty source file")
        target = self.workspace.root / self.workspace.scratch_dir / relative_path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(source)
        argv = [part.replace("{file}", str(target)) for part in self.workspace.build_command]

        with self._slots:
            started = time.monotonic()
            try:
                proc = subprocess.run(
                    argv,
                    cwd=self.workspace.root,
                    capture_output=True,
                    text=True,
                    timeout=timeout,
                )
            except subprocess.TimeoutExpired as exc:
                duration = time.monotonic() - started
                raw = (exc.stdout or "") + (exc.stderr or "")
                if isinstance(raw, bytes):  # subprocess may hand back bytes here
                    raw = raw.decode(errors="replace")
                return BuildReport(
                    success=False,
                    diagnostics=[
                        Diagnostic(
                            file=relative_path,
                            line=1,
                            column=0,
                            severity="error",
                            message=f"build timed out after {timeout:g} s",
                        )
                    ],
                    duration=duration,
                    timed_out=True,
                    raw_output=raw,
                )
            except (OSError, ValueError) as exc:
                raise WorkspaceError(f"cannot spawn build command {argv[0]!r}: {exc}") from exc
            duration = time.monotonic() - started

        raw = proc.stdout + proc.stderr
        diagnostics = parse_diagnostics(raw)
        success = proc.returncode == 0 and not any(
            d.severity == "error" for d in diagnostics
        )
        return BuildReport(
            success=success, diagnostics=diagnostics, duration=duration, raw_output=raw
        )


# ---------------------------------------------------------------------------
# Mock backend


def source_digest(source: str) -> str:
    return hashlib.sha256(source.encode()).hexdigest()


@dataclass
class MockLeanEnv:
    """Deterministic scripted build backend (lock-free, bit-stable).

    Resolution order per build: exact source-hash entries, then substring
    rules, then the default report (or a synthetic "no entry" failure).
    Script files use the JSON schema documented in the README.
    """

    entries: dict[str, BuildReport] = field(default_factory=dict)
    rules: list[tuple[str, BuildReport]] = field(default_factory=list)
    default: BuildReport | Callable[[str, str], BuildReport] | None = None

    def build(self, relative_path: str, source: str, timeout: float) -> BuildReport:
        digest = source_digest(source)
        if digest in self.entries:
            return _copy_report(self.entries[digest])
        for marker, report in self.rules:
            if marker in source:
                return _copy_report(report)
        if callable(self.default):
            return self.default(relative_path, source)
        if self.default is not None:
            return _copy_report(self.default)
        return BuildReport(
            success=False,
            diagnostics=[
                Diagnostic(
                    file=relative_path,
                    line=1,
                    column=0,
                    severity="error",
                    message=f"mock build backend: no entry for source sha256={digest[:12]}",
                )
            ],
            raw_output="",
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "MockLeanEnv":
        data = json.loads(Path(path).read_text())
        if data.get("schema") != 1:
            raise ValueError(f"{path}: unsupported build script schema")
        entries = {
            e["source_sha256"]: report_from_dict(e["report"]) for e in data.get("entries", [])
        }
        rules = [(r["contains"], report_from_dict(r["report"])) for r in data.get("rules", [])]
        default = report_from_dict(data["default"]) if "default" in data else None
        return cls(entries=entries, rules=rules, default=default)


def report_from_dict(raw: dict[str, Any]) -> BuildReport:
    return BuildReport(
        success=bool(raw.get("success", False)),
        diagnostics=[
            Diagnostic(
                file=d.get("file", "Candidate.lean"),
                line=int(d.get("line", 1)),
                column=int(d.get("column", 0)),
                severity=d.get("severity", "error"),
                message=d.get("message", ""),
            )
            for d in raw.get("diagnostics", [])
        ],
        duration=float(raw.get("duration", 0.0)),
        timed_out=bool(raw.get("timed_out", False)),
        raw_output=raw.get("raw_output", ""),
    )


def _copy_report(report: BuildReport) -> BuildReport:
    return BuildReport(
        success=report.success,
        diagnostics=list(report.diagnostics),
        duration=report.duration,
        timed_out=report.timed_out,
        raw_output=report.raw_output,
    )


def success_report(warnings: Sequence[Diagnostic] = ()) -> BuildReport:
    return BuildReport(success=True, diagnostics=list(warnings), raw_output="")


def failure_report(
    *diags: Diagnostic, raw_output: str = "", file: str = "Candidate.lean"
) -> BuildReport:
    diagnostics = list(diags) or [
        Diagnostic(file=file, line=1, column=0, severity="error", message="build failed")
    ]
    return BuildReport(success=False, diagnostics=diagnostics, raw_output=raw_output)
