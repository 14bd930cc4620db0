"""On-disk prompt templates and brace-safe placeholder filling.

Templates are shipped verbatim and golden-tested; never edit them casually.
Filling uses literal ``{key}`` replacement rather than ``str.format`` because
several templates contain Lean binder braces like ``{x : Real}``.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

TEMPLATE_NAMES = (
    "proposer_system_iterative",
    "proposer_system_single_shot",
    "proposer_user",
    "experience_user",
    "past_attempts_user",
    "context_summary_system",
    "context_summary_user",
    "reviewer_system",
    "reviewer_user",
    "attempt",
    "previous_attempt_user",
)


def template_resource(name: str):
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown template {name!r}")
    return resources.files("proofloop") / "prompts" / f"{name}.txt"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return template_resource(name).read_text().rstrip("\n")


def fill(template: str, **values: str) -> str:
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out


def render(name: str, **values: str) -> str:
    return fill(load_template(name), **values)
