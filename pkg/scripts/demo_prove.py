#!/usr/bin/env python3
"""Deterministic walkthrough of one attempt loop, fully offline.

A scripted proposer fails twice (unknown lemma, then a leftover sorry) and
succeeds on the third try; the mock compiler and a scripted reviewer close
the loop. Run it to see the feedback each failed cycle generates:

    python scripts/demo_prove.py
"""

from proofloop.core import (
    ConstantClock,
    HistoryN,
    ModelPrice,
    PriceTable,
    ProverConfig,
    Proved,
    ServiceBundle,
    TheoremTask,
    run_attempt_loop,
    summarize_cycle,
)
from proofloop.leanenv import Diagnostic, MockLeanEnv, failure_report, success_report
from proofloop.llm import ScriptedLLM, proposal_reply, reviewer_reply
from proofloop.toolbox import MockLibrarySearch, Toolbox

TARGET = "theorem add_zero_demo (n : Nat) : n + 0 = n := sorry"
FILE = f"import Mathlib\n\n{TARGET}\n"


def main() -> None:
    task = TheoremTask("add_zero_demo", TARGET, FILE)
    llm = ScriptedLLM(
        replies=[
            proposal_reply(
                "theorem add_zero_demo (n : Nat) : n + 0 = n := by\n  exact Nat.add_zerro n",
                reasoning="try the library lemma",
                tokens_in=900, tokens_out=120, tokens_thinking=300,
            ),
            proposal_reply(
                "theorem add_zero_demo (n : Nat) : n + 0 = n := by\n"
                "  induction n with\n  | zero => rfl\n  | succ n ih => sorry",
                reasoning="split by induction to inspect the goals",
                tokens_in=1100, tokens_out=150, tokens_thinking=350,
            ),
            proposal_reply(
                "theorem add_zero_demo (n : Nat) : n + 0 = n := by\n  omega",
                reasoning="omega closes linear arithmetic goals",
                tokens_in=1300, tokens_out=90, tokens_thinking=200,
            ),
        ]
    )
    reviewer = ScriptedLLM(replies=[reviewer_reply(True, True, True, reasoning="clean")])
    env = MockLeanEnv(
        rules=[
            (
                "add_zerro",
                failure_report(
                    Diagnostic(
                        "Candidate.lean", 4, 8, "error",
                        "unknown identifier Nat.add_zerro",
                    )
                ),
            ),
            (
                "| succ n ih => ",
                failure_report(
                    Diagnostic(
                        "Candidate.lean", 6, 17, "error",
                        "unsolved goals\n⊢ n + 1 + 0 = n + 1",
                    )
                ),
            ),
        ],
        default=success_report(),
    )
    services = ServiceBundle(
        llm=llm,
        leanenv=env,
        toolbox=Toolbox(library=MockLibrarySearch(), enabled=frozenset({"library_search"})),
        reviewer_llm=reviewer,
        price_table=PriceTable({"mock-model": ModelPrice(3.0, 15.0, 15.0)}),
        clock=ConstantClock(),
    )
    config = ProverConfig(max_iterations=10, memory=HistoryN(5), model="mock-model")

    def show(attempt, cycle) -> None:
        print(f"--- iteration {attempt.iteration}: {summarize_cycle(cycle)}")
        print("    feedback:", attempt.feedback.replace("\n", "\n    "))

    result = run_attempt_loop(task, config, services, on_attempt=show)
    assert isinstance(result.outcome, Proved)
    print(f"\nproved at iteration {result.outcome.iteration}; "
          f"cost ${result.total_cost:.4f}")
    print("final file:")
    print(result.outcome.final_source)


if __name__ == "__main__":
    main()
