"""Domain types, configuration, stage ledger, and run-record persistence.

Every type here is an immutable value object safe to share across
concurrent branches; a run record is assembled by a single owner after
all branches join.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import shutil
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import CorruptRecordError, StorageUnavailableError

SCHEMA_VERSION = "vispath/1"

RECORD_FILENAME = "record.json"
FIGURES_DIRNAME = "figures"

# Fields dropped from structural equality and record hashing. Timestamps
# and measured durations vary across otherwise identical replays.
VOLATILE_KEYS = frozenset({"started_at", "finished_at", "stage_timings", "wall_time_ms"})


class Mode(str, Enum):
    FULL = "full"
    NO_FEEDBACK = "no_feedback"
    BINARY_FEEDBACK = "binary_feedback"
    ZERO_SHOT = "zero_shot"
    COT = "cot"


#: Modes that end with a synthesis stage (as opposed to one-shot baselines).
SYNTHESIS_MODES = (Mode.FULL, Mode.NO_FEEDBACK, Mode.BINARY_FEEDBACK)


class Origin(str, Enum):
    MULTI_PATH = "multi_path"
    ZERO_SHOT = "zero_shot"
    COT = "cot"
    SYNTHESIZED = "synthesized"


class Verdict(str, Enum):
    USABLE = "usable"
    FIXABLE = "fixable"
    DISCARD = "discard"


@dataclass(frozen=True)
class TaskInput:
    """One visualization request: query text plus dataset context."""

    task_id: str
    query: str
    dataset_description: str
    data_files: tuple[tuple[str, str], ...] = ()  # (name, local path)

    def __post_init__(self):
        if not self.query.strip():
            raise ValueError("query must be non-empty")
        object.__setattr__(self, "data_files", tuple(tuple(p) for p in self.data_files))

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "query": self.query,
            "dataset_description": self.dataset_description,
            "data_files": [{"name": n, "path": p} for n, p in self.data_files],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskInput":
        return cls(
            task_id=d["task_id"],
            query=d["query"],
            dataset_description=d["dataset_description"],
            data_files=tuple((f["name"], f["path"]) for f in d["data_files"]),
        )


@dataclass(frozen=True)
class ReasoningPath:
    """One structured plan: a plausible concretization of the request."""

    index: int  # 1-based, unique within a run
    plan_text: str
    chart_intent: str | None = None

    def __post_init__(self):
        if not self.plan_text.strip():
            raise ValueError("plan_text must be non-empty")
        if self.index < 1:
            raise ValueError("index must be >= 1")

    def to_dict(self) -> dict:
        return {"index": self.index, "plan_text": self.plan_text, "chart_intent": self.chart_intent}

    @classmethod
    def from_dict(cls, d: dict) -> "ReasoningPath":
        return cls(index=d["index"], plan_text=d["plan_text"], chart_intent=d.get("chart_intent"))


@dataclass(frozen=True)
class CandidateScript:
    """One executable plotting script, fences already stripped."""

    path_index: int
    source: str
    origin: Origin

    def __post_init__(self):
        if not self.source.strip():
            raise ValueError("source must be non-empty")

    def to_dict(self) -> dict:
        return {"path_index": self.path_index, "source": self.source, "origin": self.origin.value}

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateScript":
        return cls(path_index=d["path_index"], source=d["source"], origin=Origin(d["origin"]))


@dataclass(frozen=True)
class ExecutionOutcome:
    """Routed result of executing one candidate.

    Exactly one of ``figures`` / ``error_text`` is populated: a successful
    run carries rendered figure references, a failed one carries the error.
    """

    ok: bool
    figures: tuple[str, ...] = ()  # image files, relative to the record store
    error_text: str = ""
    wall_time_ms: int = 0
    timed_out: bool = False

    def __post_init__(self):
        object.__setattr__(self, "figures", tuple(self.figures))
        if self.ok:
            if not self.figures:
                raise ValueError("ok outcome requires at least one figure")
            if self.error_text:
                raise ValueError("ok outcome must not carry error_text")
            if self.timed_out:
                raise ValueError("timed_out outcome cannot be ok")
        else:
            if not self.error_text:
                raise ValueError("failed outcome requires error_text")
            if self.figures:
                raise ValueError("failed outcome must not carry figures")

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "figures": list(self.figures),
            "error_text": self.error_text,
            "wall_time_ms": self.wall_time_ms,
            "timed_out": self.timed_out,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionOutcome":
        return cls(
            ok=d["ok"],
            figures=tuple(d["figures"]),
            error_text=d["error_text"],
            wall_time_ms=d.get("wall_time_ms", 0),
            timed_out=d["timed_out"],
        )


@dataclass(frozen=True)
class FeedbackReport:
    """Structured review of one candidate against the user intent."""

    path_index: int
    semantic_alignment: str
    data_correctness: str
    visual_quality: str
    verdict: Verdict
    raw_text: str

    def to_dict(self) -> dict:
        return {
            "path_index": self.path_index,
            "semantic_alignment": self.semantic_alignment,
            "data_correctness": self.data_correctness,
            "visual_quality": self.visual_quality,
            "verdict": self.verdict.value,
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackReport":
        return cls(
            path_index=d["path_index"],
            semantic_alignment=d["semantic_alignment"],
            data_correctness=d["data_correctness"],
            visual_quality=d["visual_quality"],
            verdict=Verdict(d["verdict"]),
            raw_text=d["raw_text"],
        )


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for one pipeline run. Defaults follow the reference setup:
    three reasoning paths, generation temperature 0.2, deterministic judge."""

    k: int = 3
    mode: Mode = Mode.FULL
    gen_temperature: float = 0.2
    judge_temperature: float = 0.0
    exec_timeout: float = 60.0  # seconds
    max_error_chars: int = 4000
    gen_model: str = "gpt-4o-mini"
    feedback_model: str = "gpt-4o"
    judge_model: str = "gpt-4o"
    parallelism: int | None = None  # branch-level cap; None means k
    run_budget: float = 600.0  # hard wall-clock budget per run, seconds
    prompt_dir: str | None = None  # overrides the bundled prompt files

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mode"] = self.mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d["mode"] = Mode(d["mode"])
        return cls(**d)


def validate_config(config: PipelineConfig) -> list[str]:
    """Return one message per violated field; an empty list means valid."""
    errors: list[str] = []
    if config.k < 1:
        errors.append("k must be >= 1")
    if not isinstance(config.mode, Mode):
        errors.append("mode must be one of " + ", ".join(m.value for m in Mode))
    if not 0.0 <= config.gen_temperature <= 2.0:
        errors.append("gen_temperature must be in [0, 2]")
    if not 0.0 <= config.judge_temperature <= 2.0:
        errors.append("judge_temperature must be in [0, 2]")
    if config.exec_timeout <= 0:
        errors.append("exec_timeout must be > 0")
    if config.max_error_chars <= 0:
        errors.append("max_error_chars must be > 0")
    if config.parallelism is not None and config.parallelism < 1:
        errors.append("parallelism must be >= 1 when set")
    if config.run_budget <= 0:
        errors.append("run_budget must be > 0")
    for name in ("gen_model", "feedback_model", "judge_model"):
        if not getattr(config, name).strip():
            errors.append(f"{name} must be non-empty")
    return errors


@dataclass
class StageLedger:
    """Per-run call counts for the four accounted stage categories."""

    query_expansion: int = 0
    code_generation: int = 0
    visual_feedback: int = 0
    editor: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StageLedger":
        return cls(**d)


def ledger_total(ledger: StageLedger) -> int:
    """Sum of the four stage counts."""
    return ledger.query_expansion + ledger.code_generation + ledger.visual_feedback + ledger.editor


@dataclass(frozen=True)
class RunRecord:
    """Full audit of one pipeline run.

    ``final``/``final_outcome`` are None only on partial records, where
    ``failure`` carries the abort reason.
    """

    input: TaskInput
    config: PipelineConfig
    paths: tuple[ReasoningPath, ...]
    candidates: tuple[CandidateScript, ...]
    outcomes: tuple[ExecutionOutcome, ...]
    feedback: tuple[FeedbackReport, ...]
    final: CandidateScript | None
    final_outcome: ExecutionOutcome | None
    ledger: StageLedger
    transcripts: tuple[int, ...] = ()  # gateway exchange ids, in call order
    started_at: str = ""
    finished_at: str = ""
    stage_timings: dict[str, float] = field(default_factory=dict)  # milliseconds
    failure: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "feedback", tuple(self.feedback))
        object.__setattr__(self, "transcripts", tuple(self.transcripts))

    def to_dict(self) -> dict:
        return {
            "input": self.input.to_dict(),
            "config": self.config.to_dict(),
            "paths": [p.to_dict() for p in self.paths],
            "candidates": [c.to_dict() for c in self.candidates],
            "outcomes": [o.to_dict() for o in self.outcomes],
            "feedback": [f.to_dict() for f in self.feedback],
            "final": self.final.to_dict() if self.final else None,
            "final_outcome": self.final_outcome.to_dict() if self.final_outcome else None,
            "ledger": self.ledger.to_dict(),
            "transcripts": list(self.transcripts),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "stage_timings": dict(self.stage_timings),
            "failure": self.failure,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            input=TaskInput.from_dict(d["input"]),
            config=PipelineConfig.from_dict(d["config"]),
            paths=tuple(ReasoningPath.from_dict(p) for p in d["paths"]),
            candidates=tuple(CandidateScript.from_dict(c) for c in d["candidates"]),
            outcomes=tuple(ExecutionOutcome.from_dict(o) for o in d["outcomes"]),
            feedback=tuple(FeedbackReport.from_dict(f) for f in d["feedback"]),
            final=CandidateScript.from_dict(d["final"]) if d["final"] else None,
            final_outcome=ExecutionOutcome.from_dict(d["final_outcome"]) if d["final_outcome"] else None,
            ledger=StageLedger.from_dict(d["ledger"]),
            transcripts=tuple(d["transcripts"]),
            started_at=d["started_at"],
            finished_at=d["finished_at"],
            stage_timings=dict(d["stage_timings"]),
            failure=d.get("failure"),
        )


def canonical_json(payload: Any) -> str:
    """UTF-8 JSON with stable key order, used for files and digests."""
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=1)


def strip_volatile(payload: Any) -> Any:
    """Recursively drop timestamp/timing fields from a record dict."""
    if isinstance(payload, dict):
        return {k: strip_volatile(v) for k, v in payload.items() if k not in VOLATILE_KEYS}
    if isinstance(payload, list):
        return [strip_volatile(v) for v in payload]
    return payload


def record_digest(record: RunRecord) -> str:
    """Content hash of a record with volatile fields excluded.

    Two replays of the same cassette produce records with equal digests.
    """
    stable = strip_volatile(record.to_dict())
    return hashlib.sha256(canonical_json(stable).encode("utf-8")).hexdigest()


def structurally_equal(a: RunRecord, b: RunRecord) -> bool:
    return strip_volatile(a.to_dict()) == strip_volatile(b.to_dict())


def _integrity_checksum(record_payload: dict) -> str:
    return hashlib.sha256(canonical_json(record_payload).encode("utf-8")).hexdigest()


def persist_run(record: RunRecord, store: Path) -> RunRecord:
    """Write ``record`` into the ``store`` directory; returns the stored form.

    Figure references already relative to the store are kept as-is (the
    files must exist there); absolute references are copied into
    ``figures/`` and rewritten. The returned record is exactly what
    :func:`load_run` will yield, so ``load_run(store)`` round-trips it.
    """
    store = Path(store)
    try:
        store.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageUnavailableError(f"cannot create store {store}: {exc}") from exc
    if not _writable(store):
        raise StorageUnavailableError(f"store not writable: {store}")

    record = _ingest_figures(record, store)
    payload = record.to_dict()
    document = {
        "schema": SCHEMA_VERSION,
        "checksum": _integrity_checksum(payload),
        "record": payload,
    }
    try:
        (store / RECORD_FILENAME).write_text(canonical_json(document) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageUnavailableError(f"cannot write record: {exc}") from exc
    return record


def load_run(store: Path) -> RunRecord:
    """Load a persisted record, verifying schema and integrity checksum."""
    path = Path(store)
    if path.is_dir():
        path = path / RECORD_FILENAME
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageUnavailableError(f"cannot read record {path}: {exc}") from exc
    try:
        document = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorruptRecordError(f"record is not valid JSON: {path}: {exc}") from exc
    if not isinstance(document, dict) or document.get("schema") != SCHEMA_VERSION:
        raise CorruptRecordError(f"unsupported record schema in {path}")
    payload = document.get("record")
    if payload is None or document.get("checksum") != _integrity_checksum(payload):
        raise CorruptRecordError(f"checksum mismatch in {path}")
    return RunRecord.from_dict(payload)


def _ingest_figures(record: RunRecord, store: Path) -> RunRecord:
    """Copy externally-referenced figure files into the store."""

    def fix_outcome(outcome: ExecutionOutcome | None, slot: str) -> ExecutionOutcome | None:
        if outcome is None or not outcome.figures:
            return outcome
        fixed: list[str] = []
        changed = False
        for i, ref in enumerate(outcome.figures, start=1):
            p = Path(ref)
            if not p.is_absolute():
                fixed.append(ref)
                continue
            dest_dir = store / FIGURES_DIRNAME / slot
            dest_dir.mkdir(parents=True, exist_ok=True)
            dest = dest_dir / f"fig_{i}{p.suffix or '.png'}"
            shutil.copyfile(p, dest)
            fixed.append(dest.relative_to(store).as_posix())
            changed = True
        if not changed:
            return outcome
        return dataclasses.replace(outcome, figures=tuple(fixed))

    outcomes = tuple(fix_outcome(o, f"branch_{i + 1}") for i, o in enumerate(record.outcomes))
    final_outcome = fix_outcome(record.final_outcome, "final")
    if outcomes == record.outcomes and final_outcome == record.final_outcome:
        return record
    return dataclasses.replace(record, outcomes=outcomes, final_outcome=final_outcome)


def _writable(directory: Path) -> bool:
    probe = directory / ".write_probe"
    try:
        probe.write_text("", encoding="utf-8")
        probe.unlink()
        return True
    except OSError:
        return False
