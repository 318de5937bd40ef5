"""Benchmark harness: suite loading, judge-scored plot similarity,
executable rate, strategy scorecards, and the K-sweep.

A suite is a JSON-lines file, one item per line:

    {"id": ..., "query": ..., "dataset_description": ...,
     "data_files": [{"name": ..., "path": ...}], "gt_image": ... | null}

Paths are relative to the suite file. Items without a ground-truth image
are measured on executable rate only. A bundled 10-item desk-scale suite
ships with the package for offline work.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .agents import PromptLibrary
from .core import (
    PipelineConfig,
    RunRecord,
    StageLedger,
    TaskInput,
    ledger_total,
    load_run,
)
from .errors import (
    PipelineFatalError,
    ScoringFailureError,
    SuiteFormatError,
    VisPathError,
)
from .executor import RunnerTransport
from .gateway import ChatRequest, Gateway, Message, RoleTag
from .pipeline import Pipeline

logger = logging.getLogger(__name__)

JUDGE_CACHE_FILENAME = "judge.json"

SCORE_REPROMPT = "Reply with a single integer between 0 and 100 and nothing else."

# Approximation of execution-correctness checking: the vision judge is
# asked a yes/no question about the candidate alone. Not the original
# checker-script protocol; results are only comparable within this harness.
CORRECTNESS_SYSTEM = (
    "You check whether a generated plot correctly answers a request. "
    "Inspect the attached candidate image. Reply with exactly one word: "
    "yes if the plot is a correct answer to the request, no otherwise."
)
CORRECTNESS_USER = "Request:\n{query}\n\nIs the attached plot a correct answer? Reply yes or no."


@dataclass(frozen=True)
class BenchItem:
    item_id: str
    query: str
    dataset_description: str
    data_files: tuple[tuple[str, str], ...] = ()
    ground_truth_image: str | None = None

    def __post_init__(self):
        if not self.query.strip():
            raise SuiteFormatError(f"item {self.item_id!r}: query is empty")
        object.__setattr__(self, "data_files", tuple(tuple(p) for p in self.data_files))

    def to_task(self) -> TaskInput:
        return TaskInput(
            task_id=self.item_id,
            query=self.query,
            dataset_description=self.dataset_description,
            data_files=self.data_files,
        )


@dataclass
class ItemResult:
    item_id: str
    executable: bool
    plot_score: int | None = None
    correct: bool | None = None
    failure: str | None = None
    resumed: bool = False


@dataclass
class Scorecard:
    """Aggregates for one strategy over one suite."""

    strategy: str
    items: list[ItemResult] = field(default_factory=list)
    ledger_totals: StageLedger = field(default_factory=StageLedger)

    @property
    def executable_rate(self) -> float:
        if not self.items:
            raise ValueError("scorecard has no items")
        return 100.0 * sum(1 for r in self.items if r.executable) / len(self.items)

    @property
    def mean_plot_score(self) -> float | None:
        scores = [r.plot_score for r in self.items if r.plot_score is not None]
        if not scores:
            return None
        return sum(scores) / len(scores)

    @property
    def resumed_count(self) -> int:
        return sum(1 for r in self.items if r.resumed)


def desk_suite_path() -> Path:
    """Location of the bundled 10-item desk-scale suite."""
    return Path(str(resources.files("vispath").joinpath("suites/desk/suite.jsonl")))


def load_suite(path: Path) -> list[BenchItem]:
    """Parse and validate a suite file; all referenced files must exist."""
    path = Path(path)
    if not path.is_file():
        raise SuiteFormatError(f"suite file not found: {path}")
    base = path.parent
    items: list[BenchItem] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            item_id = str(entry["id"])
            query = entry["query"]
            dataset_description = entry["dataset_description"]
            raw_files = entry.get("data_files", [])
            gt = entry.get("gt_image")
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise SuiteFormatError(f"{path}:{lineno}: malformed item: {exc}") from exc
        if item_id in seen:
            raise SuiteFormatError(f"{path}:{lineno}: duplicate item id {item_id!r}")
        seen.add(item_id)

        data_files = []
        for f in raw_files:
            resolved = (base / f["path"]).resolve()
            if not resolved.is_file():
                raise SuiteFormatError(f"{path}:{lineno}: missing data file: {f['path']}")
            data_files.append((f["name"], str(resolved)))
        gt_path: str | None = None
        if gt:
            resolved = (base / gt).resolve()
            if not resolved.is_file():
                raise SuiteFormatError(f"{path}:{lineno}: missing ground-truth image: {gt}")
            gt_path = str(resolved)

        items.append(
            BenchItem(
                item_id=item_id,
                query=query,
                dataset_description=dataset_description,
                data_files=tuple(data_files),
                ground_truth_image=gt_path,
            )
        )
    return items


_INT_RE = re.compile(r"-?\d+")
_SCORE_HINT_RE = re.compile(r"score\D{0,5}(-?\d+)", re.IGNORECASE)


def parse_score(text: str) -> int | None:
    """Pull the judge's integer out of its reply; None when absent."""
    hinted = _SCORE_HINT_RE.findall(text)
    if hinted:
        return int(hinted[-1])
    plain = _INT_RE.findall(text)
    if plain:
        return int(plain[0])
    return None


def score_plot(
    candidate_image: Path,
    ground_truth_image: Path,
    query: str,
    gateway: Gateway,
    config: PipelineConfig,
    prompts: PromptLibrary | None = None,
) -> int:
    """Judge-assigned 0-100 similarity between candidate and ground truth.

    Both images ride along as attachments (candidate first). An
    out-of-range or unparseable reply earns one reprompt, then a
    scoring failure.
    """
    prompts = prompts if prompts is not None else PromptLibrary.load(config.prompt_dir)
    template = prompts["judge"]
    attachments = (Path(candidate_image).read_bytes(), Path(ground_truth_image).read_bytes())
    user_text = template.render(query=query)

    for text in (user_text, user_text + "\n\n" + SCORE_REPROMPT):
        request = ChatRequest(
            role_tag=RoleTag.JUDGE,
            messages=(
                Message("system", template.system_text),
                Message("user", text, attachments=attachments),
            ),
            temperature=config.judge_temperature,
            model_id=config.judge_model,
        )
        reply = gateway.complete(request)
        score = parse_score(reply.text)
        if score is not None and 0 <= score <= 100:
            return score
    raise ScoringFailureError(f"judge reply not a 0-100 integer: {reply.text[:120]!r}")


def score_correctness(
    candidate_image: Path,
    query: str,
    gateway: Gateway,
    config: PipelineConfig,
) -> bool:
    """Yes/no correctness approximation from the same judge role."""
    request = ChatRequest(
        role_tag=RoleTag.JUDGE,
        messages=(
            Message("system", CORRECTNESS_SYSTEM),
            Message("user", CORRECTNESS_USER.replace("{query}", query),
                    attachments=(Path(candidate_image).read_bytes(),)),
        ),
        temperature=config.judge_temperature,
        model_id=config.judge_model,
    )
    reply = gateway.complete(request)
    return reply.text.strip().lower().startswith("y")


def executable_rate(records: list[RunRecord]) -> float:
    """Percentage of records whose final script executed and rendered."""
    if not records:
        raise ValueError("no records")
    ok = sum(1 for r in records if r.final_outcome is not None and r.final_outcome.ok)
    return 100.0 * ok / len(records)


def run_suite(
    suite: list[BenchItem],
    config: PipelineConfig,
    gateway: Gateway,
    transport: RunnerTransport,
    out_dir: Path,
    strategy: str | None = None,
    resume: bool = True,
    correctness: bool = False,
) -> Scorecard:
    """One pipeline run per item, persisted and restartable.

    Items whose record already exists under ``out_dir`` are skipped on
    resume (their judge scores are reused from the cache as well), so a
    crashed suite continues where it stopped. Per-item failures are
    recorded, never fatal to the suite.
    """
    out_dir = Path(out_dir)
    items_dir = out_dir / "items"
    card = Scorecard(strategy=strategy or config.mode.value)
    prompts = PromptLibrary.load(config.prompt_dir)

    for item in suite:
        store = items_dir / item.item_id
        record, resumed, failure = _obtain_record(item, config, gateway, transport, store, resume)
        result = ItemResult(
            item_id=item.item_id,
            executable=bool(record and record.final_outcome and record.final_outcome.ok),
            failure=failure,
            resumed=resumed,
        )
        if record is not None:
            _accumulate(card.ledger_totals, record.ledger)
            if result.executable and item.ground_truth_image:
                result.plot_score = _judged_score(item, record, store, gateway, config, prompts)
            if correctness and result.executable:
                result.correct = _judged_correctness(item, record, store, gateway, config)
        card.items.append(result)

    write_scorecard_csv(card, out_dir / "scorecard.csv")
    write_scorecard_markdown([card], out_dir / "scorecard.md")
    return card


def _obtain_record(
    item: BenchItem,
    config: PipelineConfig,
    gateway: Gateway,
    transport: RunnerTransport,
    store: Path,
    resume: bool,
) -> tuple[RunRecord | None, bool, str | None]:
    if resume and (store / "record.json").is_file():
        try:
            return load_run(store), True, None
        except VisPathError:
            logger.warning("item %s: unreadable record, re-running", item.item_id)
    try:
        pipeline = Pipeline(gateway, transport, config, store.parent)
        return pipeline.run(item.to_task()), False, None
    except PipelineFatalError as exc:
        record = None
        try:
            record = load_run(store)  # the persisted partial record
        except VisPathError:
            pass
        logger.error("item %s failed: %s", item.item_id, exc)
        return record, False, str(exc)


def _judged_score(item, record, store, gateway, config, prompts) -> int | None:
    cache = store / JUDGE_CACHE_FILENAME
    cached = _read_cache(cache)
    if "plot_score" in cached:
        return cached["plot_score"]
    candidate = store / record.final_outcome.figures[0]
    try:
        score = score_plot(candidate, Path(item.ground_truth_image), item.query,
                           gateway, config, prompts)
    except (ScoringFailureError, OSError) as exc:
        logger.warning("item %s: plot score unavailable: %s", item.item_id, exc)
        score = None
    _write_cache(cache, {**cached, "plot_score": score})
    return score


def _judged_correctness(item, record, store, gateway, config) -> bool | None:
    cache = store / JUDGE_CACHE_FILENAME
    cached = _read_cache(cache)
    if "correct" in cached:
        return cached["correct"]
    candidate = store / record.final_outcome.figures[0]
    try:
        verdict = score_correctness(candidate, item.query, gateway, config)
    except (VisPathError, OSError) as exc:
        logger.warning("item %s: correctness unavailable: %s", item.item_id, exc)
        verdict = None
    _write_cache(cache, {**cached, "correct": verdict})
    return verdict


def _read_cache(path: Path) -> dict:
    if not path.is_file():
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, OSError):
        return {}


def _write_cache(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def _accumulate(total: StageLedger, one: StageLedger) -> None:
    total.query_expansion += one.query_expansion
    total.code_generation += one.code_generation
    total.visual_feedback += one.visual_feedback
    total.editor += one.editor


def k_sweep(
    suite: list[BenchItem],
    k_values: list[int],
    config: PipelineConfig,
    gateway: Gateway,
    transport: RunnerTransport,
    out_dir: Path,
    resume: bool = True,
) -> list[tuple[int, Scorecard]]:
    """Scorecard per path count, plus a comparison table and chart."""
    bad = [k for k in k_values if not 1 <= k <= 8]
    if bad:
        raise ValueError(f"k values outside [1, 8]: {bad}")
    out_dir = Path(out_dir)
    results: list[tuple[int, Scorecard]] = []
    for k in k_values:
        cfg_k = dataclasses.replace(config, k=k)
        card = run_suite(
            suite, cfg_k, gateway, transport, out_dir / f"k_{k}",
            strategy=f"{config.mode.value} (k={k})", resume=resume,
        )
        results.append((k, card))

    _write_sweep_table(results, out_dir)
    _render_sweep_chart(results, out_dir / "sweep.png")
    return results


def _write_sweep_table(results: list[tuple[int, Scorecard]], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "sweep.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "mean_plot_score", "executable_rate", "ledger_total"])
        for k, card in results:
            mean = card.mean_plot_score
            writer.writerow([
                k,
                "" if mean is None else f"{mean:.2f}",
                f"{card.executable_rate:.1f}",
                ledger_total(card.ledger_totals),
            ])
    lines = ["| k | Plot Score | Executable Rate (%) |", "|---|---|---|"]
    for k, card in results:
        mean = card.mean_plot_score
        lines.append(f"| {k} | {'n/a' if mean is None else f'{mean:.2f}'} | {card.executable_rate:.1f} |")
    (out_dir / "sweep.md").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _render_sweep_chart(results: list[tuple[int, Scorecard]], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ks = [k for k, _ in results]
    exec_rates = [card.executable_rate for _, card in results]
    scores = [card.mean_plot_score for _, card in results]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, exec_rates, marker="o", label="Executable rate (%)")
    if any(s is not None for s in scores):
        ax.plot(ks, [s if s is not None else float("nan") for s in scores],
                marker="s", label="Mean plot score")
    ax.set_xlabel("reasoning paths (k)")
    ax.set_ylabel("metric value")
    ax.set_title("K-sweep")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def write_scorecard_csv(card: Scorecard, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "executable", "plot_score", "correct", "failure"])
        for r in card.items:
            writer.writerow([
                r.item_id,
                int(r.executable),
                "" if r.plot_score is None else r.plot_score,
                "" if r.correct is None else int(r.correct),
                r.failure or "",
            ])


def write_scorecard_markdown(cards: list[Scorecard], path: Path) -> None:
    """Aggregate table in the usual benchmark layout, one row per strategy."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        "| Method | Plot Score | Executable Rate (%) | Ledger Total |",
        "|---|---|---|---|",
    ]
    for card in cards:
        mean = card.mean_plot_score
        lines.append(
            f"| {card.strategy} | {'n/a' if mean is None else f'{mean:.2f}'} "
            f"| {card.executable_rate:.1f} | {ledger_total(card.ledger_totals)} |"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
