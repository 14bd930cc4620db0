"""Golden tests freezing the shipped prompt templates byte-for-byte."""

import hashlib

from proofloop import prompts

# sha256 of the shipped template files. A mismatch means someone edited a
# template; templates are part of the run contract, bump these consciously.
GOLDEN_SHA256 = {
    "attempt": "b60882775921006278608cf3114d29af1f635210f554aa70d1805c91092427fa",
    "context_summary_system": "8f1dc1dc2345a09d028cd7ad8d3c295c3a6b203f9060a4a60c97c7ae88c500b6",
    "context_summary_user": "cf29c8fd81673b77c3acc173b8632c6f230456019141dc26790f085332c14527",
    "experience_user": "dab1fcb51281de66bebc414074a60766e4df31a432e14548a45a75e1d3ff5858",
    "past_attempts_user": "86dbca74c1e5a575b720891afcf1bdf13c72769594ca97282923358348d590a4",
    "previous_attempt_user": "53ae94cf1f47d46bb9bdab83eee1124e547d186ae476a937234cad4254e31a32",
    "proposer_system_iterative": "0d5593770cddc97c77e097a0874c3d4b59e2320b2bbdab37202ea7ef73233f4b",
    "proposer_system_single_shot": "b7a17b3f2f44c8f678dc156f4894d0b151d73c36f42d1773e66f0183497bcf1a",
    "proposer_user": "1c1e786bbf69076ed6ae77e23356c7952e9488811b9abdba84c0540d63d3c44c",
    "reviewer_system": "e4251fb67672cba2f78609454256e56e096f65160156ff3c4f4dc57359728a8f",
    "reviewer_user": "e6eaa0a4fa216b0fed9b36d9696ffc670ed9142f9dae000fa0e8ace31972804f",
}


def test_template_inventory_matches():
    assert set(GOLDEN_SHA256) == set(prompts.TEMPLATE_NAMES)


def test_templates_byte_identical_to_goldens():
    for name, expected in GOLDEN_SHA256.items():
        raw = prompts.template_resource(name).read_bytes()
        assert hashlib.sha256(raw).hexdigest() == expected, f"template {name} changed"


def test_fill_is_brace_safe():
    # Lean binders like {x : Real} appear verbatim in the single-shot prompt
    # and must survive filling untouched.
    text = prompts.render("proposer_system_single_shot", lean_version="4.24")
    assert "{x : Real}" in text
    assert "Lean version 4.24" in text
    assert "{lean_version}" not in text


def test_proposer_user_fill():
    text = prompts.render(
        "proposer_user",
        target_theorem="theorem t : 1 = 1 := sorry",
        complete_file="import Mathlib\n\ntheorem t : 1 = 1 := sorry",
    )
    assert "<target>\ntheorem t : 1 = 1 := sorry\n</target>" in text
    assert "```lean\nimport Mathlib" in text


def test_context_summary_system_keeps_literal_placeholder():
    # The reflection system prompt embeds a literal {experience} inside its
    # message-template example; it is content, not a fill site.
    text = prompts.load_template("context_summary_system")
    assert "{experience}" in text


def test_iterative_system_prompt_mentions_lake_build():
    text = prompts.render("proposer_system_iterative", lean_version="4.24")
    assert "`lake build`" in text
    assert text.startswith("You are an LLM acting as a Lean 4 proof expert in an ITERATIVE")
