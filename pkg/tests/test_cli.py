"""CLI exit codes, flag precedence, and report wiring (all via main())."""

import json

import pytest

from proofloop.cli import main
from proofloop.config import ConfigError, load_settings
from proofloop.harness import load_ledger


TARGET = "theorem cli_demo (n : Nat) : n + 0 = n := sorry"
GOOD = "theorem cli_demo (n : Nat) : n + 0 = n := by\n  omega"


@pytest.fixture
def task_file(tmp_path):
    path = tmp_path / "cli_demo.lean"
    path.write_text(f"import Mathlib\n\n{TARGET}\n")
    return path


def write_config(tmp_path, llm_replies, reviewer_replies=(), profile_extra=None):
    """A profile with scripted llm + always-succeeding mock build."""
    llm_script = tmp_path / "llm_script.json"
    llm_script.write_text(json.dumps({"schema": 1, "replies": llm_replies, "repeat_last": True}))
    reviewer_script = tmp_path / "reviewer_script.json"
    reviewer_script.write_text(
        json.dumps({"schema": 1, "replies": list(reviewer_replies), "repeat_last": True})
    )
    build_script = tmp_path / "build_script.json"
    build_script.write_text(
        json.dumps({"schema": 1, "default": {"success": True, "diagnostics": []}})
    )
    profile = {
        "llm": {"backend": "scripted", "script": str(llm_script)},
        "reviewer_llm": {"backend": "scripted", "script": str(reviewer_script)},
        "leanenv": {"backend": "mock", "script": str(build_script)},
        "memory": {"strategy": "none"},
        "out_dir": str(tmp_path / "out"),
    }
    profile.update(profile_extra or {})
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"profiles": {"default": profile, "alt": {"max_iterations": 7}}}))
    return config


def proposal_json(updated):
    return json.dumps({"reasoning": "", "imports": [], "opens": [], "updated_theorem": updated})


APPROVE = {"text": json.dumps({"check1": True, "check2": True, "check3": True,
                               "approved": True, "reasoning": "ok"})}


def test_prove_success_exit_zero_with_transcript(tmp_path, task_file, capsys):
    config = write_config(
        tmp_path,
        llm_replies=[{"text": proposal_json(GOOD)}],
        reviewer_replies=[APPROVE],
    )
    code = main(["--config", str(config), "prove", str(task_file), "cli_demo"])
    out = capsys.readouterr().out
    assert code == 0
    assert "iteration 1/" in out and "proved" in out
    transcript = json.loads((tmp_path / "out" / "cli_demo_transcript.json").read_text())
    assert transcript["outcome"]["kind"] == "proved"
    assert len(transcript["attempts"]) == 1
    assert (tmp_path / "out" / "cli_demo.lean").read_text().endswith("omega\n")


def test_prove_scripted_success_at_iteration_two(tmp_path, task_file):
    bad = "theorem cli_demo (n : Nat) : n + 0 = n := by\n  sorry"
    config = write_config(
        tmp_path,
        llm_replies=[{"text": proposal_json(bad)}, {"text": proposal_json(GOOD)}],
        reviewer_replies=[APPROVE],
    )
    code = main(["--config", str(config), "prove", str(task_file), "cli_demo"])
    assert code == 0
    transcript = json.loads((tmp_path / "out" / "cli_demo_transcript.json").read_text())
    assert transcript["outcome"] == {"kind": "proved", "iteration": 2}
    assert len(transcript["attempts"]) == 2


def test_prove_exhausted_exit_one(tmp_path, task_file):
    sorry_reply = proposal_json("theorem cli_demo (n : Nat) : n + 0 = n := by\n  sorry")
    config = write_config(tmp_path, llm_replies=[{"text": sorry_reply}])
    code = main([
        "--config", str(config), "prove", str(task_file), "cli_demo",
        "--max-iterations", "1",
    ])
    assert code == 1


def test_prove_error_exit_two(tmp_path, task_file):
    config = write_config(tmp_path, llm_replies=[])  # scripted llm exhausts instantly
    code = main(["--config", str(config), "prove", str(task_file), "cli_demo"])
    assert code == 2


def test_prove_missing_theorem_is_usage_error(tmp_path, task_file, capsys):
    config = write_config(tmp_path, llm_replies=[])
    code = main(["--config", str(config), "prove", str(task_file), "no_such_theorem"])
    assert code == 64
    assert "no_such_theorem" in capsys.readouterr().err


def test_prove_missing_file_is_usage_error(tmp_path, capsys):
    code = main(["prove", str(tmp_path / "absent.lean"), "t"])
    assert code == 64


def test_missing_argument_is_usage_error(capsys):
    assert main(["prove"]) == 64


def test_unknown_override_is_usage_error(tmp_path, task_file, capsys):
    config = write_config(tmp_path, llm_replies=[])
    code = main([
        "--config", str(config), "-O", "speling_mistake=3",
        "prove", str(task_file), "cli_demo",
    ])
    assert code == 64
    assert "unknown config key" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# precedence: flag > profile > default


def test_flag_beats_profile_beats_default(tmp_path):
    config_path = write_config(tmp_path, llm_replies=[], profile_extra={"max_iterations": 9})
    default = load_settings(None)
    assert default["max_iterations"] == 20  # packaged default
    profile = load_settings(config_path)
    assert profile["max_iterations"] == 9
    flagged = load_settings(config_path, overrides=("max_iterations=3",))
    assert flagged["max_iterations"] == 3
    flag_wins = load_settings(config_path, overrides=("max_iterations=3",),
                              flags={"max_iterations": 2})
    assert flag_wins["max_iterations"] == 2


def test_named_profile_selected(tmp_path):
    config_path = write_config(tmp_path, llm_replies=[])
    settings = load_settings(config_path, profile="alt")
    assert settings["max_iterations"] == 7


def test_dotted_override_parses_json_values(tmp_path):
    settings = load_settings(None, overrides=("memory.strategy=history", "memory.n=5"))
    assert settings["memory"] == {"strategy": "history", "n": 5}
    config = settings.prover_config()
    from proofloop.core import HistoryN

    assert config.memory == HistoryN(5)


def test_unknown_profile_rejected(tmp_path):
    config_path = write_config(tmp_path, llm_replies=[])
    with pytest.raises(ConfigError):
        load_settings(config_path, profile="nope")


# ---------------------------------------------------------------------------
# bench + report


def make_bench_fixture(tmp_path):
    tasks_root = tmp_path / "tasks"
    tasks_root.mkdir()
    names = ("alpha", "beta", "gamma")
    for name in names:
        target = f"theorem {name} (n : Nat) : n + 0 = n := sorry"
        (tasks_root / f"{name}.lean").write_text(f"import Mathlib\n\n{target}\n")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({
        "schema": 1,
        "name": "mini",
        "entries": [{"id": n, "path": n + ".lean"} for n in names],
    }))
    keyed = {
        "alpha": [{"text": proposal_json(f"theorem alpha (n : Nat) : n + 0 = n := by omega")}],
        "beta": [{"text": proposal_json(f"theorem beta (n : Nat) : n + 0 = n := by sorry")}],
        "gamma": [{"text": proposal_json(f"theorem gamma (n : Nat) : n + 0 = n := by omega")}],
    }
    llm_script = tmp_path / "keyed_llm.json"
    llm_script.write_text(json.dumps({"schema": 1, "keyed": keyed, "repeat_last": True}))
    reviewer_script = tmp_path / "keyed_reviewer.json"
    reviewer_script.write_text(json.dumps({
        "schema": 1,
        "keyed": {"alpha": [APPROVE], "gamma": [APPROVE]},
        "repeat_last": True,
    }))
    build_script = tmp_path / "build.json"
    build_script.write_text(json.dumps({"schema": 1, "default": {"success": True, "diagnostics": []}}))
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"profiles": {"default": {
        "llm": {"backend": "scripted", "script": str(llm_script)},
        "reviewer_llm": {"backend": "scripted", "script": str(reviewer_script)},
        "leanenv": {"backend": "mock", "script": str(build_script)},
        "memory": {"strategy": "none"},
        "max_iterations": 2,
        "out_dir": str(tmp_path / "out"),
    }}}))
    return manifest, tasks_root, config


def test_bench_summary_and_ledger(tmp_path, capsys):
    manifest, root, config = make_bench_fixture(tmp_path)
    ledger_path = tmp_path / "ledger.jsonl"
    code = main([
        "--config", str(config), "bench", str(manifest),
        "--root", str(root), "--ledger", str(ledger_path), "--samples", "2", "--k", "1,2",
    ])
    out = capsys.readouterr().out
    assert code == 0
    assert "tasks: 3" in out
    assert "pass@1" in out and "pass@2" in out
    ledger = load_ledger(ledger_path)
    assert len(ledger.rows) == 6


def test_bench_resume_idempotent(tmp_path, capsys):
    manifest, root, config = make_bench_fixture(tmp_path)
    ledger_path = tmp_path / "ledger.jsonl"
    args = [
        "--config", str(config), "bench", str(manifest),
        "--root", str(root), "--ledger", str(ledger_path), "--samples", "2",
    ]
    assert main(args) == 0
    first_summary = capsys.readouterr().out.splitlines()[-4:]
    before = ledger_path.read_bytes()
    assert main(args + ["--resume"]) == 0
    second_summary = capsys.readouterr().out.splitlines()[-4:]
    assert ledger_path.read_bytes() == before
    assert first_summary == second_summary


def test_report_over_ledger_and_csv(tmp_path, capsys):
    manifest, root, config = make_bench_fixture(tmp_path)
    ledger_path = tmp_path / "ledger.jsonl"
    main([
        "--config", str(config), "bench", str(manifest),
        "--root", str(root), "--ledger", str(ledger_path), "--samples", "2",
    ])
    capsys.readouterr()
    csv_dir = tmp_path / "csv"
    code = main([
        "--config", str(config), "report", str(ledger_path),
        "--k", "1,2", "--seed", "4", "--resamples", "300", "--csv-dir", str(csv_dir),
    ])
    out = capsys.readouterr().out
    assert code == 0
    assert "proofloop report" in out
    assert "iteration curve" in out
    passk_csv = (csv_dir / "pass_at_k.csv").read_text()
    assert passk_csv.startswith("k,estimate,ci_low,ci_high")
    curve_csv = (csv_dir / "curve.csv").read_text()
    assert curve_csv.startswith("iteration,mean,sem")


def test_report_multiple_ledgers_comparison(tmp_path, capsys):
    manifest, root, config = make_bench_fixture(tmp_path)
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    for path in (a, b):
        main([
            "--config", str(config), "bench", str(manifest),
            "--root", str(root), "--ledger", str(path), "--samples", "1",
        ])
    capsys.readouterr()
    code = main(["--config", str(config), "report", str(a), str(b), "--k", "1", "--resamples", "200"])
    out = capsys.readouterr().out
    assert code == 0
    assert "comparison (ablation view)" in out


def test_report_malformed_ledger_names_line(tmp_path, capsys):
    path = tmp_path / "broken.jsonl"
    path.write_text('{"schema": 1, "kind": "header", "name": "x", "fingerprint": "f"}\nnot json\n')
    code = main(["report", str(path)])
    err = capsys.readouterr().err
    assert code == 1
    assert "line 2" in err
