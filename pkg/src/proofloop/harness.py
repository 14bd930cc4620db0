"""Benchmark harness: dataset manifests, the append-only run ledger,
pass@k / confidence-interval / curve statistics, cost accounting, and the
task × sample run orchestrator.
"""

from __future__ import annotations

import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import special as _special

from .core import (
    Error,
    Exhausted,
    MissingPrice,
    ProofLoopError,
    ProofResult,
    Proved,
    ProverConfig,
    PriceTable,
    ServiceBundle,
    TheoremTask,
    config_fingerprint,
    config_to_dict,
    run_attempt_loop,
)

LEDGER_SCHEMA = 1
BOOTSTRAP_RESAMPLES = 10_000


class DomainError(ProofLoopError):
    """Statistics called outside their domain (bad n, c, or k)."""


class MismatchedRuns(ProofLoopError):
    """Per-run ledgers do not share a task set."""


class LedgerError(ProofLoopError):
    pass


# ---------------------------------------------------------------------------
# Dataset manifests


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str


@dataclass
class DatasetManifest:
    name: str
    entries: list[ManifestEntry]
    pins: dict[str, str] = field(default_factory=dict)
    provenance: str = ""

    def __post_init__(self) -> None:
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest entry ids must be unique")

    def resolve(self, root: str | Path) -> list[tuple[str, Path]]:
        """Absolute task paths; every path must exist."""
        root = Path(root)
        resolved = []
        for entry in self.entries:
            path = root / entry.path
            if not path.exists():
                raise FileNotFoundError(f"manifest entry {entry.id}: missing {path}")
            resolved.append((entry.id, path))
        return resolved


def load_manifest(path: str | Path) -> DatasetManifest:
    data = json.loads(Path(path).read_text())
    if data.get("schema") != 1:
        raise ValueError(f"{path}: unsupported manifest schema")
    return DatasetManifest(
        name=data["name"],
        entries=[ManifestEntry(e["id"], e["path"]) for e in data["entries"]],
        pins=dict(data.get("pins", {})),
        provenance=data.get("provenance", ""),
    )


def ablation_manifest() -> DatasetManifest:
    """The frozen 100-task ablation subset shipped with the package."""
    resource = resources.files("proofloop") / "data" / "putnam_ablation_100.json"
    with resources.as_file(resource) as path:
        return load_manifest(path)


def load_tasks(manifest: DatasetManifest, root: str | Path) -> list[TheoremTask]:
    tasks = []
    for task_id, path in manifest.resolve(root):
        tasks.append(TheoremTask.from_file(path, task_id, dataset=manifest.name))
    return tasks


# ---------------------------------------------------------------------------
# pass@k and confidence intervals


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased estimator 1 - C(n-c, k)/C(n, k).

    Evaluated as the exact rational product prod_{i<k} (n-c-i)/(n-i), so there
    is no factorial overflow and the identities pass@1 = c/n and
    pass@n = [c >= 1] hold exactly in floating point.
    """
    if n < 1 or not 0 <= c <= n or not 1 <= k <= n:
        raise DomainError(f"invalid pass@k query n={n} c={c} k={k}")
    miss = Fraction(1)
    for i in range(k):
        miss *= Fraction(n - c - i, n - i)
        if miss == 0:
            break
    return float(1 - miss)


def ci95(n: int, c: int) -> tuple[float, float]:
    """Exact 95% Clopper-Pearson interval for a binomial proportion."""
    if n < 1 or not 0 <= c <= n:
        raise DomainError(f"invalid counts n={n} c={c}")
    low = 0.0 if c == 0 else float(_special.betaincinv(c, n - c + 1, 0.025))
    high = 1.0 if c == n else float(_special.betaincinv(c + 1, n - c, 0.975))
    return low, high


def bootstrap_ci(
    values: Sequence[float],
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> tuple[float, float]:
    """Seeded percentile bootstrap (2.5/97.5) of the mean over tasks."""
    if not values:
        raise DomainError("bootstrap over an empty value list")
    rng = np.random.default_rng(seed)
    data = np.asarray(values, dtype=float)
    draws = rng.integers(0, len(data), size=(resamples, len(data)))
    means = data[draws].mean(axis=1)
    low, high = np.percentile(means, [2.5, 97.5])
    return float(low), float(high)


# ---------------------------------------------------------------------------
# Run ledger

_VOLATILE_HEADER_KEYS = ("path",)


@dataclass
class RunLedger:
    path: Path
    header: dict[str, Any]
    rows: list[dict[str, Any]]

    @property
    def fingerprint(self) -> str:
        return self.header.get("fingerprint", "")

    @property
    def name(self) -> str:
        return self.header.get("name", self.path.stem)

    def task_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row["task_id"])
        return list(seen)

    def rows_by_task(self) -> dict[str, list[dict[str, Any]]]:
        grouped: dict[str, list[dict[str, Any]]] = {}
        for row in self.rows:
            grouped.setdefault(row["task_id"], []).append(row)
        return grouped

    def completed_pairs(self) -> set[tuple[str, int]]:
        return {(row["task_id"], row["sample"]) for row in self.rows}


def load_ledger(path: str | Path, tolerate_partial_tail: bool = False) -> RunLedger:
    path = Path(path)
    raw_lines = path.read_text().splitlines()
    header: dict[str, Any] | None = None
    rows: list[dict[str, Any]] = []
    fingerprint: str | None = None
    for number, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            if tolerate_partial_tail and number == len(raw_lines):
                break  # torn final line from a crash mid-write
            raise LedgerError(f"{path} line {number}: invalid JSON ({exc})") from exc
        if record.get("schema") != LEDGER_SCHEMA:
            raise LedgerError(f"{path} line {number}: unsupported schema version")
        kind = record.get("kind")
        if kind == "header":
            if header is not None:
                raise LedgerError(f"{path} line {number}: duplicate header record")
            header = record
        elif kind == "result":
            if header is None:
                raise LedgerError(f"{path} line {number}: result before header")
            if fingerprint is None:
                fingerprint = record.get("fingerprint")
            elif record.get("fingerprint") != fingerprint:
                raise LedgerError(
                    f"{path} line {number}: fingerprint differs within one run"
                )
            rows.append(record)
        else:
            raise LedgerError(f"{path} line {number}: unknown record kind {kind!r}")
    if header is None:
        raise LedgerError(f"{path} line 1: expected a header record")
    if fingerprint is not None and fingerprint != header.get("fingerprint"):
        raise LedgerError(f"{path}: result fingerprints do not match the header")
    return RunLedger(path=path, header=header, rows=rows)


class LedgerWriter:
    """Append-only JSONL writer; one record per line, flushed per append."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "a" if append else "w", encoding="utf-8")
        self._lock = threading.Lock()

    def append(self, record: dict[str, Any]) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            self._handle.write(line + "\n")
            self._handle.flush()

    def close(self) -> None:
        self._handle.close()


def result_row(
    task: TheoremTask,
    sample: int,
    result: ProofResult,
    fingerprint: str,
    model: str,
    started_at: float,
    finished_at: float,
) -> dict[str, Any]:
    outcome = result.outcome
    if isinstance(outcome, Proved):
        kind, solved_at, reason = "proved", outcome.iteration, None
    elif isinstance(outcome, Exhausted):
        kind, solved_at, reason = "exhausted", None, None
    else:
        kind, solved_at, reason = "error", None, outcome.reason
    return {
        "schema": LEDGER_SCHEMA,
        "kind": "result",
        "task_id": task.id,
        "sample": sample,
        "outcome": kind,
        "solved_at": solved_at,
        "error": reason,
        "iterations": [
            {
                "t": a.iteration,
                "tokens_in": a.tokens_in,
                "tokens_out": a.tokens_out,
                "tokens_thinking": a.tokens_thinking,
                "wall_time": round(a.wall_time, 6),
            }
            for a in result.transcript
        ],
        "model": model,
        "cost_usd": round(result.total_cost, 8),
        "started_at": round(started_at, 6),
        "finished_at": round(finished_at, 6),
        "fingerprint": fingerprint,
    }


def run_benchmark(
    manifest: DatasetManifest,
    config: ProverConfig,
    services: ServiceBundle,
    samples_per_task: int = 1,
    seed: int = 0,
    *,
    ledger_path: str | Path,
    task_root: str | Path | None = None,
    tasks: Sequence[TheoremTask] | None = None,
    jobs: int = 1,
    resume: bool = False,
    writer_factory: Callable[[Path, bool], Any] | None = None,
    on_result: Callable[[dict[str, Any]], None] | None = None,
) -> RunLedger:
    """Run samples_per_task independent loops per task, appending each outcome
    to the ledger as it completes.

    Completed (task, sample) pairs are skipped on a resumed run, so a killed
    benchmark can continue where it stopped. Per-task Error outcomes are
    recorded, not fatal; only ledger I/O failures abort the run.
    """
    if samples_per_task < 1:
        raise DomainError("samples_per_task must be >= 1")
    if tasks is None:
        if task_root is None:
            raise ValueError("either tasks or task_root is required")
        tasks = load_tasks(manifest, task_root)
    ledger_path = Path(ledger_path)
    fingerprint = config_fingerprint(config)

    done: set[tuple[str, int]] = set()
    appending = False
    if resume and ledger_path.exists():
        existing = load_ledger(ledger_path, tolerate_partial_tail=True)
        if existing.fingerprint != fingerprint:
            raise LedgerError(
                f"{ledger_path}: existing run used config {existing.fingerprint}, "
                f"refusing to resume with {fingerprint}"
            )
        done = existing.completed_pairs()
        appending = True

    factory = writer_factory or (lambda path, append: LedgerWriter(path, append=append))
    writer = factory(ledger_path, appending)
    try:
        if not appending:
            writer.append(
                {
                    "schema": LEDGER_SCHEMA,
                    "kind": "header",
                    "name": manifest.name,
                    "fingerprint": fingerprint,
                    "seed": seed,
                    "samples_per_task": samples_per_task,
                    "config": config_to_dict(config),
                    "pins": manifest.pins,
                }
            )
        units = [
            (task, sample)
            for task in tasks
            for sample in range(samples_per_task)
            if (task.id, sample) not in done
        ]

        def run_unit(unit: tuple[TheoremTask, int]) -> dict[str, Any]:
            task, sample = unit
            started = services.clock.now()
            try:
                result = run_attempt_loop(task, config, services)
            except Exception as exc:  # defensive: a unit failure is a row, not a crash
                result = ProofResult(task.id, Error(f"loop crashed: {exc}"), [], 0.0)
            finished = services.clock.now()
            return result_row(
                task, sample, result, fingerprint, config.model, started, finished
            )

        if jobs <= 1:
            for unit in units:
                row = run_unit(unit)
                writer.append(row)
                if on_result:
                    on_result(row)
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for row in pool.map(run_unit, units):
                    writer.append(row)
                    if on_result:
                        on_result(row)
    finally:
        writer.close()
    return load_ledger(ledger_path)


# ---------------------------------------------------------------------------
# Statistics over ledgers


@dataclass(frozen=True)
class PassAtKPoint:
    k: int
    estimate: float
    low: float
    high: float


def task_success_counts(ledger: RunLedger) -> dict[str, tuple[int, int]]:
    """Per task: (samples drawn, successes)."""
    counts: dict[str, tuple[int, int]] = {}
    for task_id, rows in ledger.rows_by_task().items():
        n = len(rows)
        c = sum(1 for r in rows if r["outcome"] == "proved")
        counts[task_id] = (n, c)
    return counts


def dataset_pass_at_k(
    ledger: RunLedger,
    ks: Sequence[int],
    seed: int = 0,
    resamples: int = BOOTSTRAP_RESAMPLES,
) -> list[PassAtKPoint]:
    """Mean per-task pass@k with a seeded percentile-bootstrap CI over tasks."""
    counts = task_success_counts(ledger)
    if not counts:
        raise DomainError("empty ledger")
    points = []
    for k in ks:
        values = [pass_at_k(n, c, k) for n, c in counts.values()]
        low, high = bootstrap_ci(values, resamples=resamples, seed=seed)
        points.append(
            PassAtKPoint(k=k, estimate=float(np.mean(values)), low=low, high=high)
        )
    return points


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    mean: float
    sem: float


def iteration_curve(ledgers: Sequence[RunLedger]) -> list[CurvePoint]:
    """Per-iteration mean solved fraction over runs, with the SEM across runs.

    Each run contributes, at iteration t, the fraction of its units with
    solved_at <= t; the curve runs up to the largest iteration budget.
    """
    if not ledgers:
        raise MismatchedRuns("at least one run is required")
    task_sets = [frozenset(l.task_ids()) for l in ledgers]
    if len(set(task_sets)) != 1:
        raise MismatchedRuns("runs do not share a task set")

    budget = 0
    for ledger in ledgers:
        budget = max(budget, int(ledger.header.get("config", {}).get("max_iterations", 0)))
        for row in ledger.rows:
            if row.get("solved_at"):
                budget = max(budget, row["solved_at"])
            budget = max(budget, len(row.get("iterations", [])))
    budget = max(budget, 1)

    fractions = []
    for ledger in ledgers:
        rows = ledger.rows
        if not rows:
            raise MismatchedRuns(f"{ledger.path}: run holds no result rows")
        per_t = []
        for t in range(1, budget + 1):
            solved = sum(
                1 for r in rows if r["solved_at"] is not None and r["solved_at"] <= t
            )
            per_t.append(solved / len(rows))
        fractions.append(per_t)

    runs = len(fractions)
    curve = []
    for t in range(budget):
        values = [fractions[r][t] for r in range(runs)]
        mean = sum(values) / runs
        if runs > 1:
            variance = sum((v - mean) ** 2 for v in values) / (runs - 1)
            sem = math.sqrt(variance) / math.sqrt(runs)
        else:
            sem = 0.0
        curve.append(CurvePoint(iteration=t + 1, mean=mean, sem=sem))
    return curve


@dataclass
class CostReport:
    per_task: dict[str, float]
    per_model: dict[str, float]
    total: float
    mean_per_sample: float
    samples: int


def cost_report(ledger: RunLedger, price_table: PriceTable) -> CostReport:
    """Token counts priced by category; MissingPrice names the model."""
    per_task: dict[str, float] = {}
    per_model: dict[str, float] = {}
    total = 0.0
    samples = 0
    for row in ledger.rows:
        samples += 1
        model = row.get("model", "")
        row_cost = 0.0
        for it in row.get("iterations", []):
            row_cost += price_table.cost(
                model,
                it.get("tokens_in", 0),
                it.get("tokens_out", 0),
                it.get("tokens_thinking", 0),
            )
        per_task[row["task_id"]] = per_task.get(row["task_id"], 0.0) + row_cost
        per_model[model] = per_model.get(model, 0.0) + row_cost
        total += row_cost
    return CostReport(
        per_task=per_task,
        per_model=per_model,
        total=total,
        mean_per_sample=total / samples if samples else 0.0,
        samples=samples,
    )


# ---------------------------------------------------------------------------
# Report formatting (byte-stable for a fixed seed and ledger)


def pass_at_k_csv(points: Sequence[PassAtKPoint]) -> str:
    lines = ["k,estimate,ci_low,ci_high"]
    lines += [
        f"{p.k},{p.estimate:.6f},{p.low:.6f},{p.high:.6f}" for p in points
    ]
    return "\n".join(lines) + "\n"


def curve_csv(curve: Sequence[CurvePoint]) -> str:
    lines = ["iteration,mean,sem"]
    lines += [f"{p.iteration},{p.mean:.6f},{p.sem:.6f}" for p in curve]
    return "\n".join(lines) + "\n"


def format_report(
    ledgers: Sequence[RunLedger],
    ks: Sequence[int] = (1, 5, 10),
    seed: int = 0,
    resamples: int = BOOTSTRAP_RESAMPLES,
    price_table: PriceTable | None = None,
    include_curve: bool = True,
) -> str:
    """Human-readable statistics over one or more run ledgers."""
    out: list[str] = []
    out.append("proofloop report")
    out.append(
        "methods: pass@k = unbiased estimator, mean over tasks; dataset CI = "
        f"percentile bootstrap over tasks ({resamples} resamples, seed {seed}); "
        "per-task CI = Clopper-Pearson 95%; curves show mean +/- SEM over runs"
    )
    comparison: list[tuple[str, float, float, float]] = []
    for ledger in ledgers:
        counts = task_success_counts(ledger)
        samples = sum(n for n, _ in counts.values())
        solved = sum(c for _, c in counts.values())
        out.append("")
        out.append(f"run: {ledger.name} (config {ledger.fingerprint})")
        out.append(
            f"tasks: {len(counts)}  samples: {samples}  proved: {solved} "
            f"({(solved / samples * 100.0) if samples else 0.0:.1f}%)"
        )
        usable_ks = [k for k in ks if all(k <= n for n, _ in counts.values())]
        skipped = [k for k in ks if k not in usable_ks]
        if skipped:
            out.append(f"skipped k values beyond the sample count: {skipped}")
        points = dataset_pass_at_k(ledger, usable_ks, seed=seed, resamples=resamples)
        if points:
            out.append("k     estimate  ci_low    ci_high")
            for p in points:
                out.append(f"{p.k:<5d} {p.estimate:.6f}  {p.low:.6f}  {p.high:.6f}")
        if price_table is not None:
            costs = cost_report(ledger, price_table)
            out.append(
                f"cost: total ${costs.total:.4f}, mean per sample "
                f"${costs.mean_per_sample:.4f}"
            )
            for model in sorted(costs.per_model):
                out.append(f"  {model}: ${costs.per_model[model]:.4f}")
        else:
            recorded = sum(row.get("cost_usd", 0.0) for row in ledger.rows)
            out.append(f"cost (as recorded at run time): ${recorded:.4f}")
        pass1 = points[0].estimate if points and points[0].k == 1 else float("nan")
        comparison.append(
            (ledger.name, pass1, solved / samples if samples else 0.0, ledger_cost(ledger))
        )
    if len(ledgers) > 1:
        out.append("")
        out.append("comparison (ablation view)")
        out.append("run                        pass@1    solved    cost_usd")
        for name, pass1, frac, cost in comparison:
            out.append(f"{name:<26s} {pass1:.6f}  {frac:.6f}  {cost:.4f}")
    if include_curve:
        out.append("")
        out.append("iteration curve (cumulative solved fraction):")
        try:
            curve = iteration_curve(list(ledgers))
            out.append(curve_csv(curve).rstrip("\n"))
        except MismatchedRuns as exc:
            out.append(f"(not comparable across these runs: {exc})")
    return "\n".join(out) + "\n"


def ledger_cost(ledger: RunLedger) -> float:
    return sum(row.get("cost_usd", 0.0) for row in ledger.rows)
