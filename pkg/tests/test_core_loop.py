"""Attempt-loop semantics with fully scripted services (no network, no Lean)."""

import pytest

from conftest import approving_reviewer, make_services, make_task, quick_config, unknown_identifier_report
from proofloop.core import (
    AttemptRecord,
    Error,
    Exhausted,
    HistoryN,
    ModelPrice,
    PriceTable,
    ProofProposal,
    Proved,
    ReviewVerdict,
    TheoremTask,
    locate_theorem,
)
from proofloop.core import run_attempt_loop
from proofloop.leanenv import MockLeanEnv, success_report
from proofloop.llm import LLMReply, ScriptedLLM, proposal_reply, reviewer_reply
from proofloop.review import review_proposal


GOOD = "theorem demo_add_zero (n : Nat) : n + 0 = n := by\n  omega"
BAD = "theorem demo_add_zero (n : Nat) : n + 0 = n := by\n  exact Nat.bad_name n"
SORRY = "theorem demo_add_zero (n : Nat) : n + 0 = n := by\n  sorry"
APPLYQ = "theorem demo_add_zero (n : Nat) : n + 0 = n := by apply?"


def failing_env():
    return MockLeanEnv(
        rules=[("bad_name", unknown_identifier_report())], default=success_report()
    )


def test_fail_twice_then_succeed_proves_at_iteration_3():
    task = make_task()
    llm = ScriptedLLM(replies=[proposal_reply(BAD), proposal_reply(BAD), proposal_reply(GOOD)])
    services = make_services(llm, reviewer=approving_reviewer(), env=failing_env())
    result = run_attempt_loop(task, quick_config(), services)
    assert isinstance(result.outcome, Proved)
    assert result.outcome.iteration == 3
    assert len(result.transcript) == 3
    assert [a.iteration for a in result.transcript] == [1, 2, 3]
    assert "unknown identifier" in result.transcript[0].feedback
    assert "omega" in result.outcome.final_source


def test_always_sorry_exhausts_at_budget():
    task = make_task()
    llm = ScriptedLLM(replies=[proposal_reply(SORRY)], repeat_last=True)
    services = make_services(llm, env=MockLeanEnv(default=success_report()))
    result = run_attempt_loop(task, quick_config(max_iterations=5), services)
    assert isinstance(result.outcome, Exhausted)
    assert len(result.transcript) == 5
    assert [a.iteration for a in result.transcript] == [1, 2, 3, 4, 5]
    assert all("sorry placeholder" in a.feedback for a in result.transcript)


def test_compiling_apply_loophole_never_proves_and_names_tactic():
    task = make_task()
    llm = ScriptedLLM(replies=[proposal_reply(APPLYQ)], repeat_last=True)
    reviewer = ScriptedLLM(replies=[])  # must never be consulted
    services = make_services(llm, reviewer=reviewer, env=MockLeanEnv(default=success_report()))
    result = run_attempt_loop(task, quick_config(max_iterations=4), services)
    assert isinstance(result.outcome, Exhausted)
    assert len(result.transcript) == 4
    assert all("apply?" in a.feedback for a in result.transcript)
    assert reviewer.calls == []


def test_reviewer_rejection_re_enters_loop_as_feedback():
    task = make_task()
    llm = ScriptedLLM(replies=[proposal_reply(GOOD), proposal_reply(GOOD)])
    reviewer = ScriptedLLM(
        replies=[
            reviewer_reply(True, True, False, reasoning="references undefined foo_h1"),
            reviewer_reply(True, True, True, reasoning="clean"),
        ]
    )
    services = make_services(llm, reviewer=reviewer)
    result = run_attempt_loop(task, quick_config(), services)
    assert isinstance(result.outcome, Proved)
    assert result.outcome.iteration == 2
    assert "references undefined foo_h1" in result.transcript[0].feedback


def test_malformed_proposal_consumes_iteration():
    task = make_task()
    llm = ScriptedLLM(
        replies=[LLMReply(text="no structured fields here", tokens_out=7), proposal_reply(GOOD)]
    )
    services = make_services(llm, reviewer=approving_reviewer())
    result = run_attempt_loop(task, quick_config(), services)
    assert isinstance(result.outcome, Proved)
    assert result.outcome.iteration == 2
    first = result.transcript[0]
    assert first.proposal is None
    assert first.feedback.startswith("malformed proposal:")
    assert first.tokens_out == 7  # tokens spent on the bad generation still count


def test_unrecoverable_llm_failure_returns_error_outcome():
    task = make_task()
    llm = ScriptedLLM(replies=[proposal_reply(BAD)])  # exhausted on iteration 2
    services = make_services(llm, env=failing_env())
    result = run_attempt_loop(task, quick_config(), services)
    assert isinstance(result.outcome, Error)
    assert "script exhausted" in result.outcome.reason
    assert len(result.transcript) == 2  # one failed cycle + the aborted one


def test_exactly_one_propose_call_per_iteration():
    task = make_task()
    llm = ScriptedLLM(replies=[proposal_reply(SORRY)], repeat_last=True)
    services = make_services(llm, env=MockLeanEnv(default=success_report()))
    result = run_attempt_loop(task, quick_config(max_iterations=3), services)
    assert isinstance(result.outcome, Exhausted)
    assert len(llm.calls) == 3
    assert len(result.transcript) == 3


def test_proved_rechecks_clean():
    # Acceptance idempotence: re-running review on the winning proposal
    # approves again.
    task = make_task()
    llm = ScriptedLLM(replies=[proposal_reply(GOOD)])
    reviewer = approving_reviewer(times=2)
    services = make_services(llm, reviewer=reviewer)
    config = quick_config()
    result = run_attempt_loop(task, config, services)
    assert isinstance(result.outcome, Proved)
    proposal = result.transcript[-1].proposal
    verdict = review_proposal(task, proposal, services.leanenv, services.reviewer, config)
    assert isinstance(verdict, ReviewVerdict) and verdict.approved


def test_total_cost_prices_every_transcript_token():
    table = PriceTable({"mock-model": ModelPrice(3.0, 15.0, 7.5)})
    task = make_task()
    llm = ScriptedLLM(
        replies=[
            proposal_reply(BAD, tokens_in=120, tokens_out=30, tokens_thinking=11),
            proposal_reply(GOOD, tokens_in=140, tokens_out=35, tokens_thinking=13),
        ]
    )
    reviewer = ScriptedLLM(
        replies=[reviewer_reply(True, True, True, reasoning="ok", tokens_in=9, tokens_out=4)]
    )
    services = make_services(llm, reviewer=reviewer, env=failing_env(), price_table=table)
    result = run_attempt_loop(task, quick_config(), services)
    assert isinstance(result.outcome, Proved)
    expected = sum(
        table.cost("mock-model", a.tokens_in, a.tokens_out, a.tokens_thinking)
        for a in result.transcript
    )
    assert result.total_cost == expected
    # the reviewer call's tokens are part of the winning attempt's accounting
    assert result.transcript[-1].tokens_in == 140 + 9
    assert result.transcript[-1].tokens_out == 35 + 4


def test_feedback_routed_through_memory_before_next_propose():
    task = make_task()
    llm = ScriptedLLM(replies=[proposal_reply(BAD), proposal_reply(GOOD)])
    services = make_services(llm, reviewer=approving_reviewer(), env=failing_env())
    result = run_attempt_loop(task, quick_config(memory=HistoryN(3)), services)
    assert isinstance(result.outcome, Proved)
    # the second propose call must carry the first attempt's feedback
    second_call_messages = llm.calls[1][0]
    joined = "\n".join(m.content for m in second_call_messages)
    assert "unknown identifier Nat.bad_name" in joined
    assert "<attempt>" in joined


# ---------------------------------------------------------------------------
# Type invariants


def test_task_requires_unique_target():
    with pytest.raises(ValueError):
        TheoremTask("t", "theorem t : 1 = 1 := sorry", "nothing here")
    with pytest.raises(ValueError):
        TheoremTask(
            "t",
            "theorem t : 1 = 1 := sorry",
            "theorem t : 1 = 1 := sorry\ntheorem t : 1 = 1 := sorry",
        )


def test_proposal_normalizes_imports_and_requires_body():
    p = ProofProposal("r", ["A", " A ", "B"], ["N", "N"], "theorem x : 1 = 1 := rfl")
    assert p.imports == ["A", "B"]
    assert p.opens == ["N"]
    with pytest.raises(ValueError):
        ProofProposal("r", [], [], "   ")


def test_verdict_approval_requires_all_checks():
    with pytest.raises(ValueError):
        ReviewVerdict(True, True, False, approved=True, reasoning="")


def test_attempt_record_validation():
    with pytest.raises(ValueError):
        AttemptRecord(iteration=0, proposal=None, feedback="")
    with pytest.raises(ValueError):
        AttemptRecord(iteration=1, proposal=None, feedback="", tokens_in=-1)


def test_locate_theorem_spans_through_sorry():
    src = "import Mathlib\n\ntheorem a : 1 = 1 := sorry\n\ntheorem b : 2 = 2 := by\n  rfl\n"
    start, end = locate_theorem(src, "a")
    assert src[start:end] == "theorem a : 1 = 1 := sorry"
    start, end = locate_theorem(src, "b")
    assert src[start:end] == "theorem b : 2 = 2 := by\n  rfl"


def test_single_shot_mode_uses_single_shot_prompt():
    task = make_task()
    llm = ScriptedLLM(replies=[proposal_reply(GOOD)])
    services = make_services(llm, reviewer=approving_reviewer())
    config = quick_config(max_iterations=1, mode="single_shot")
    result = run_attempt_loop(task, config, services)
    assert isinstance(result.outcome, Proved)
    system = llm.calls[0][0][0]
    assert system.role == "system" and "SINGLE-SHOT" in system.content
    # no memory fragments in single-shot prompts
    assert len(llm.calls[0][0]) == 2
