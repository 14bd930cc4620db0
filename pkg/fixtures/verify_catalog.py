#!/usr/bin/env python3
"""Verify every fixture in catalog.json against its expectations.

Text expectations (the loophole corpus) always run. Build expectations need
the pinned Lean toolchain; when `lake` is missing they are reported as SKIP,
not FAIL, so the Python test suite stands alone on toolchain-less machines.

Exit status: 0 when nothing FAILed (SKIPs allowed), 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from proofloop.leanenv import LakeBuildBackend, Workspace
from proofloop.review import CandidateFile, detect_loopholes, strip_sorries

HERE = Path(__file__).resolve().parent


def check_text(source: str, expect: dict) -> tuple[bool, str]:
    report = detect_loopholes(source)
    found = sorted(report.kinds())
    wanted = sorted(expect.get("violation_kinds", []))
    if wanted and not set(wanted) <= set(found):
        return False, f"expected kinds {wanted}, found {found}"
    if not wanted and found:
        return False, f"expected a clean file, found {found}"
    return True, f"kinds={found or 'none'}"


def check_build(backend, fixture: dict, source: str, timeout: float) -> tuple[bool, str]:
    expect = fixture["expect"]
    report = backend.build(f"{fixture['id']}/Fixture.lean", source, timeout=timeout)
    if expect.get("builds") and not report.success:
        return False, f"expected a clean build, got: {report.raw_output[-400:]}"
    if expect.get("builds") is False:
        if report.success:
            return False, "expected a failing build, it succeeded"
        line = expect.get("error_line")
        needle = expect.get("message_contains", "")
        hits = [
            d
            for d in report.diagnostics
            if d.severity == "error"
            and (line is None or d.line == line)
            and needle in d.message
        ]
        if not hits:
            return False, (
                f"no error at line {line} containing {needle!r}; "
                f"got {[(d.line, d.message.splitlines()[0]) for d in report.diagnostics]}"
            )
    return True, "build matched"


def check_stripped_goals(backend, fixture: dict, source: str, timeout: float) -> tuple[bool, str]:
    expect = fixture["expect"]
    sites = [tuple(s) for s in expect.get("sorry_sites", [])]
    stripped, found_sites = strip_sorries(
        CandidateFile(source=source, sorry_sites=[], target_span=(0, 0))
    )
    if found_sites != sites:
        return False, f"recorded sites {sites} but the scanner finds {found_sites}"
    report = backend.build(f"{fixture['id']}/Stripped.lean", stripped, timeout=timeout)
    goals = [d for d in report.diagnostics if "unsolved goals" in d.message]
    wanted = expect.get("stripped_unsolved_goals", 0)
    if len(goals) != wanted:
        return False, (
            f"expected {wanted} unsolved-goals diagnostics, got {len(goals)}: "
            f"{[(d.line, d.column) for d in goals]}"
        )
    return True, f"{len(goals)} unsolved-goals diagnostics at {[(d.line, d.column) for d in goals]}"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workspace", type=Path, default=HERE)
    parser.add_argument("--catalog", type=Path, default=HERE / "catalog.json")
    parser.add_argument("--timeout", type=float, default=300.0)
    args = parser.parse_args()

    catalog = json.loads(args.catalog.read_text())
    have_lake = shutil.which("lake") is not None
    backend = None
    if have_lake:
        backend = LakeBuildBackend(Workspace(root=args.workspace), max_concurrent=2)

    failures = 0
    for fixture in catalog["fixtures"]:
        source = (args.workspace / fixture["file"]).read_text()
        category = fixture["category"]
        if category in ("loophole-positive", "loophole-negative"):
            ok, detail = check_text(source, fixture["expect"])
            status = "PASS" if ok else "FAIL"
        elif not have_lake:
            status, detail = "SKIP", "lake not on PATH (toolchain missing)"
            ok = True
        elif category == "sorry-goals":
            ok, detail = check_build(backend, fixture, source, args.timeout)
            if ok:
                ok, detail = check_stripped_goals(backend, fixture, source, args.timeout)
            status = "PASS" if ok else "FAIL"
        else:
            ok, detail = check_build(backend, fixture, source, args.timeout)
            status = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        print(f"{status:<4}  {fixture['id']:<28} [{category}] {detail}")

    print(f"\n{failures} failure(s) over {len(catalog['fixtures'])} fixtures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
