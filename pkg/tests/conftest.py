"""Shared fixtures: a small demo task and scripted service bundles."""

from __future__ import annotations

import pytest

from proofloop.core import (
    ConstantClock,
    Diagnostic,
    ProverConfig,
    ServiceBundle,
    TheoremTask,
)
from proofloop.leanenv import MockLeanEnv, failure_report, success_report
from proofloop.llm import ScriptedLLM, reviewer_reply
from proofloop.toolbox import MockLibrarySearch, MockWebSearch, Toolbox

DEMO_TARGET = "theorem demo_add_zero (n : Nat) : n + 0 = n := sorry"
DEMO_FILE = f"import Mathlib\n\n{DEMO_TARGET}\n"


@pytest.fixture
def demo_task() -> TheoremTask:
    return TheoremTask(
        id="demo_add_zero", target_theorem=DEMO_TARGET, file_content=DEMO_FILE
    )


def make_task(name: str = "demo_add_zero") -> TheoremTask:
    target = f"theorem {name} (n : Nat) : n + 0 = n := sorry"
    return TheoremTask(
        id=name,
        target_theorem=target,
        file_content=f"import Mathlib\n\n{target}\n",
    )


def unknown_identifier_report(name: str = "Nat.bad_name") -> "failure_report":
    return failure_report(
        Diagnostic("Candidate.lean", 2, 8, "error", f"unknown identifier {name}")
    )


def approving_reviewer(times: int = 1) -> ScriptedLLM:
    return ScriptedLLM(
        replies=[reviewer_reply(True, True, True, reasoning="clean proof")] * times
    )


def make_services(
    llm: ScriptedLLM,
    reviewer: ScriptedLLM | None = None,
    env: MockLeanEnv | None = None,
    reflection: ScriptedLLM | None = None,
    toolbox: Toolbox | None = None,
    price_table=None,
) -> ServiceBundle:
    return ServiceBundle(
        llm=llm,
        leanenv=env if env is not None else MockLeanEnv(default=success_report()),
        toolbox=toolbox
        if toolbox is not None
        else Toolbox(
            library=MockLibrarySearch(),
            web=MockWebSearch(),
            enabled=frozenset({"library_search", "web_search"}),
        ),
        reviewer_llm=reviewer,
        reflection_llm=reflection,
        price_table=price_table,
        clock=ConstantClock(),
    )


def quick_config(**kwargs) -> ProverConfig:
    from proofloop.core import NoMemory

    kwargs.setdefault("memory", NoMemory())
    kwargs.setdefault("max_iterations", 5)
    return ProverConfig(**kwargs)
