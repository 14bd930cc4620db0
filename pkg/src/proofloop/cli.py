"""Command surface: prove one theorem, benchmark a manifest, report a ledger.

Exit codes for ``prove``: 0 proved, 1 exhausted, 2 error, 64 usage.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict
from pathlib import Path

import click

from . import harness
from .config import ConfigError, Settings, load_settings
from .core import (
    Exhausted,
    ProofResult,
    Proved,
    TargetNotFound,
    TheoremTask,
    run_attempt_loop,
    summarize_cycle,
)

EXIT_PROVED = 0
EXIT_EXHAUSTED = 1
EXIT_ERROR = 2
EXIT_USAGE = 64


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file with profiles.")
@click.option("--profile", default="default", show_default=True)
@click.option("-O", "--override", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Dotted config override, e.g. -O memory.strategy=history")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, profile: str, overrides: tuple[str, ...]):
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["profile"] = profile
    ctx.obj["overrides"] = overrides


def _settings(ctx: click.Context, flags: dict) -> Settings:
    try:
        return load_settings(
            ctx.obj["config_path"], ctx.obj["profile"], ctx.obj["overrides"], flags
        )
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


def _result_dict(result: ProofResult) -> dict:
    if isinstance(result.outcome, Proved):
        outcome = {"kind": "proved", "iteration": result.outcome.iteration}
    elif isinstance(result.outcome, Exhausted):
        outcome = {"kind": "exhausted"}
    else:
        outcome = {"kind": "error", "reason": result.outcome.reason}
    return {
        "task_id": result.task_id,
        "outcome": outcome,
        "total_cost_usd": result.total_cost,
        "attempts": [
            {
                "iteration": a.iteration,
                "proposal": asdict(a.proposal) if a.proposal else None,
                "feedback": a.feedback,
                "tokens_in": a.tokens_in,
                "tokens_out": a.tokens_out,
                "tokens_thinking": a.tokens_thinking,
                "wall_time": a.wall_time,
            }
            for a in result.transcript
        ],
    }


@cli.command()
@click.argument("file", type=click.Path())
@click.argument("theorem")
@click.option("--max-iterations", type=int, default=None)
@click.option("--memory", "memory_strategy",
              type=click.Choice(["none", "history", "self_managed"]), default=None)
@click.option("--history-n", type=int, default=None)
@click.option("--tools", default=None, help="Comma-separated tool names.")
@click.option("--model", default=None)
@click.option("--mode", type=click.Choice(["iterative", "single_shot"]), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.pass_context
def prove(ctx, file, theorem, max_iterations, memory_strategy, history_n, tools,
          model, mode, out_dir):
    """Run one attempt loop on THEOREM inside FILE."""
    flags = {
        "max_iterations": max_iterations,
        "memory.strategy": memory_strategy,
        "memory.n": history_n,
        "tools": tools.split(",") if tools else None,
        "model": model,
        "mode": mode,
        "out_dir": out_dir,
    }
    settings = _settings(ctx, flags)
    path = Path(file)
    if not path.exists():
        raise click.UsageError(f"file not found: {file}")
    try:
        task = TheoremTask.from_file(path, theorem)
    except (TargetNotFound, ValueError) as exc:
        raise click.UsageError(str(exc)) from exc

    config = settings.prover_config()
    services = settings.build_services()
    total = config.max_iterations

    def stream(attempt, cycle):
        click.echo(f"[{task.id}] iteration {attempt.iteration}/{total}: {summarize_cycle(cycle)}")

    result = run_attempt_loop(task, config, services, on_attempt=stream)

    out = Path(settings["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    transcript_path = out / f"{task.id}_transcript.json"
    transcript_path.write_text(json.dumps(_result_dict(result), indent=2) + "\n")
    click.echo(f"transcript: {transcript_path}")

    if isinstance(result.outcome, Proved):
        proof_path = out / f"{task.id}.lean"
        proof_path.write_text(result.outcome.final_source)
        click.echo(f"proved at iteration {result.outcome.iteration}: {proof_path}")
        return EXIT_PROVED
    if isinstance(result.outcome, Exhausted):
        click.echo(f"exhausted after {len(result.transcript)} iterations")
        return EXIT_EXHAUSTED
    click.echo(f"error: {result.outcome.reason}", err=True)
    return EXIT_ERROR


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--root", "task_root", type=click.Path(), required=True,
              help="Directory the manifest's task paths resolve against.")
@click.option("--samples", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=None)
@click.option("--ledger", "ledger_path", type=click.Path(), default=None)
@click.option("--resume", is_flag=True, default=False)
@click.option("--k", "ks", default="1", show_default=True, help="Comma-separated k values.")
@click.pass_context
def bench(ctx, manifest, task_root, samples, seed, jobs, ledger_path, resume, ks):
    """Run a benchmark over a dataset manifest, appending to a run ledger."""
    settings = _settings(ctx, {"jobs": jobs})
    try:
        dataset = harness.load_manifest(manifest)
    except (OSError, ValueError, KeyError) as exc:
        raise click.UsageError(f"cannot load manifest {manifest}: {exc}") from exc
    config = settings.prover_config()
    services = settings.build_services()
    ledger_file = Path(ledger_path) if ledger_path else Path(settings["out_dir"]) / "ledger.jsonl"

    try:
        ledger = harness.run_benchmark(
            dataset,
            config,
            services,
            samples_per_task=samples,
            seed=seed,
            ledger_path=ledger_file,
            task_root=task_root,
            jobs=int(settings["jobs"]),
            resume=resume,
            on_result=lambda row: click.echo(
                f"[{row['task_id']}#{row['sample']}] {row['outcome']}"
                + (f" at iteration {row['solved_at']}" if row["solved_at"] else "")
            ),
        )
    except (harness.LedgerError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc)) from exc

    counts = harness.task_success_counts(ledger)
    n_samples = sum(n for n, _ in counts.values())
    solved = sum(c for _, c in counts.values())
    click.echo(
        f"tasks: {len(counts)}  samples: {n_samples}  proved: {solved} "
        f"({(solved / n_samples * 100.0) if n_samples else 0.0:.1f}%)"
    )
    k_values = [int(k) for k in ks.split(",") if k.strip()]
    usable = [k for k in k_values if all(k <= n for n, _ in counts.values())]
    for point in harness.dataset_pass_at_k(ledger, usable, seed=seed):
        click.echo(f"pass@{point.k}: {point.estimate:.4f} [{point.low:.4f}, {point.high:.4f}]")
    click.echo(f"mean cost per sample: ${harness.ledger_cost(ledger) / max(n_samples, 1):.4f}")
    click.echo(f"ledger: {ledger_file}")
    return 0


@cli.command()
@click.argument("ledgers", nargs=-1, required=True, type=click.Path())
@click.option("--k", "ks", default="1,5,10", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--resamples", type=int, default=harness.BOOTSTRAP_RESAMPLES, show_default=True)
@click.option("--csv-dir", type=click.Path(), default=None,
              help="Also write pass_at_k.csv and curve.csv here.")
@click.pass_context
def report(ctx, ledgers, ks, seed, resamples, csv_dir):
    """Statistics over one or more run ledgers (multiple = ablation view)."""
    settings = _settings(ctx, {})
    try:
        loaded = [harness.load_ledger(p) for p in ledgers]
    except (harness.LedgerError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc)) from exc
    k_values = [int(k) for k in ks.split(",") if k.strip()]
    try:
        text = harness.format_report(
            loaded,
            ks=k_values,
            seed=seed,
            resamples=resamples,
            price_table=settings.price_table(),
        )
    except (harness.DomainError, harness.MismatchedRuns, harness.LedgerError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(text, nl=False)
    if csv_dir:
        out = Path(csv_dir)
        out.mkdir(parents=True, exist_ok=True)
        first = loaded[0]
        counts = harness.task_success_counts(first)
        usable = [k for k in k_values if all(k <= n for n, _ in counts.values())]
        points = harness.dataset_pass_at_k(first, usable, seed=seed, resamples=resamples)
        (out / "pass_at_k.csv").write_text(harness.pass_at_k_csv(points))
        try:
            curve = harness.iteration_curve(loaded)
            (out / "curve.csv").write_text(harness.curve_csv(curve))
        except harness.MismatchedRuns:
            pass
        click.echo(f"csv written to {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    """Entry point returning the exit code (usage errors exit 64)."""
    try:
        code = cli.main(args=argv, standalone_mode=False, obj={})
        return int(code) if isinstance(code, int) else 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 130


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
