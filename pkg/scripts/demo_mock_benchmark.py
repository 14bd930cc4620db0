#!/usr/bin/env python3
"""End-to-end mock benchmark: 3 tasks x 10 samples into a run ledger,
then the statistics report (pass@k with bootstrap CIs, curve, cost).

    python scripts/demo_mock_benchmark.py [outdir]
"""

import sys
import tempfile
from pathlib import Path

from proofloop.core import ConstantClock, NoMemory, ProverConfig
from proofloop.harness import (
    DatasetManifest,
    ManifestEntry,
    format_report,
    run_benchmark,
)
from proofloop.leanenv import MockLeanEnv, failure_report, success_report
from proofloop.llm import ScriptedLLM, proposal_reply, reviewer_reply


def services():
    def good(name):
        return proposal_reply(f"theorem {name} (n : Nat) : n + 0 = n := by omega")

    def bad(name):
        return proposal_reply(f"theorem {name} (n : Nat) : n + 0 = n := by exact Nat.nope n")

    # medium_one proves on even-numbered samples only (c = 5 of n = 10), so
    # the dataset pass@k actually grows with k
    medium_script = []
    for sample in range(10):
        medium_script += [bad("medium_one"), good("medium_one") if sample % 2 == 0 else bad("medium_one")]
    llm = ScriptedLLM(
        keyed={
            "easy_one": [good("easy_one")] * 10,
            "medium_one": medium_script,
            "hard_one": [
                proposal_reply("theorem hard_one (n : Nat) : n + 0 = n := by sorry")
            ],
        },
        repeat_last=True,
    )
    reviewer = ScriptedLLM(
        keyed={
            "easy_one": [reviewer_reply(True, True, True)],
            "medium_one": [reviewer_reply(True, True, True)],
        },
        repeat_last=True,
    )
    env = MockLeanEnv(rules=[("Nat.nope", failure_report())], default=success_report())
    from proofloop.core import ServiceBundle
    from proofloop.toolbox import MockLibrarySearch, Toolbox

    return ServiceBundle(
        llm=llm,
        leanenv=env,
        toolbox=Toolbox(library=MockLibrarySearch()),
        reviewer_llm=reviewer,
        clock=ConstantClock(),
    )


def main() -> None:
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
    outdir.mkdir(parents=True, exist_ok=True)
    tasks_dir = outdir / "tasks"
    tasks_dir.mkdir(exist_ok=True)
    names = ("easy_one", "medium_one", "hard_one")
    for name in names:
        target = f"theorem {name} (n : Nat) : n + 0 = n := sorry"
        (tasks_dir / f"{name}.lean").write_text(f"import Mathlib\n\n{target}\n")
    manifest = DatasetManifest(
        name="demo-mini",
        entries=[ManifestEntry(n, f"tasks/{n}.lean") for n in names],
    )
    config = ProverConfig(max_iterations=2, memory=NoMemory(), model="mock-model")
    ledger = run_benchmark(
        manifest,
        config,
        services(),
        samples_per_task=10,
        seed=0,
        ledger_path=outdir / "ledger.jsonl",
        task_root=outdir,
        jobs=2,
    )
    print(format_report([ledger], ks=[1, 5, 10], seed=0, resamples=2000))
    print(f"ledger: {ledger.path}")


if __name__ == "__main__":
    main()
