"""End-to-end orchestration of one run: expand, generate, execute,
review, synthesize, and a final execution of the synthesized script.

Fan-out/fan-in shape: path expansion is a single call, the K branches run
in parallel (code generation, sandbox execution, review are independent
per branch), synthesis joins them, and the final script is executed once
so the benchmark can measure executability. Branch failures never abort a
run; failed candidates flow into review and synthesis as signals. Only a
hard failure of the fan-out or fan-in stage is fatal, and even then a
partial record is persisted with a failure marker.
"""

from __future__ import annotations

import contextlib
import dataclasses
import logging
import shutil
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .agents import Agents
from .core import (
    FIGURES_DIRNAME,
    CandidateScript,
    ExecutionOutcome,
    FeedbackReport,
    Mode,
    Origin,
    PipelineConfig,
    ReasoningPath,
    RunRecord,
    StageLedger,
    SYNTHESIS_MODES,
    TaskInput,
    Verdict,
    persist_run,
    validate_config,
)
from .errors import ConfigError, GatewayError, PipelineFatalError, VisPathError
from .executor import RunnerTransport, SandboxJob, execute, truncate_error
from .gateway import Gateway

logger = logging.getLogger(__name__)


@dataclass
class BranchResult:
    """One branch after join, in path-index order."""

    path: ReasoningPath
    candidate: CandidateScript
    outcome: ExecutionOutcome
    feedback: FeedbackReport | None
    gen_completed: bool
    feedback_completed: bool


class _BudgetExceeded(VisPathError):
    pass


class Pipeline:
    """Runs one task under one config, writing its record into the store."""

    def __init__(
        self,
        gateway: Gateway,
        transport: RunnerTransport,
        config: PipelineConfig,
        out_root: Path,
    ):
        violations = validate_config(config)
        if violations:
            raise ConfigError(violations)
        self.gateway = gateway
        self.transport = transport
        self.config = config
        # Resolved so sandbox workdirs and figure references are absolute
        # no matter what the caller's working directory is.
        self.out_root = Path(out_root).resolve()
        self.agents = Agents(gateway, config)

    # -- public ------------------------------------------------------------

    def run(self, task: TaskInput) -> RunRecord:
        """Execute the configured mode end to end and persist the record."""
        self._validate_task(task)
        store = self.out_root / task.task_id
        store.mkdir(parents=True, exist_ok=True)

        started_monotonic = time.monotonic()
        started_at = _utc_now()
        mark = self.gateway.transcript_mark()
        timings: dict[str, float] = {}

        try:
            if self.config.mode in SYNTHESIS_MODES:
                record = self._run_synthesis(task, store, started_monotonic, timings)
            else:
                record = self._run_baseline(task, store, timings)
        except VisPathError as exc:
            partial = self._partial_record(task, store, mark, started_at, timings, failure=str(exc))
            path = store / "record.json"
            logger.error("run %s aborted: %s", task.task_id, exc)
            raise PipelineFatalError(str(exc), record_path=path) from exc

        record = dataclasses.replace(
            record,
            transcripts=self._transcript_ids(mark),
            started_at=started_at,
            finished_at=_utc_now(),
            stage_timings=timings,
        )
        with contextlib.suppress(OSError):
            (store / "tmp").rmdir()
        return persist_run(record, store)

    def run_branches(self, task: TaskInput, paths: list[ReasoningPath], store: Path) -> list[BranchResult]:
        """Generate, execute, and (in feedback modes) review each path.

        Branches run concurrently up to the configured cap, but results
        come back in path-index order regardless of completion order, so
        downstream prompts never depend on scheduling.
        """
        workers = self.config.parallelism or max(len(paths), 1)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {path.index: pool.submit(self._branch, task, path, store) for path in paths}
            results = [futures[path.index].result() for path in sorted(paths, key=lambda p: p.index)]
        return results

    # -- stages ------------------------------------------------------------

    def _run_synthesis(self, task: TaskInput, store: Path, t0: float,
                       timings: dict[str, float]) -> RunRecord:
        config = self.config
        ledger = StageLedger()

        with _timed(timings, "expand_paths"):
            paths = self.agents.expand_paths(task, config.k)
        ledger.query_expansion += 1
        self._check_budget(t0)

        with _timed(timings, "branches"):
            branches = self.run_branches(task, paths, store)
        ledger.code_generation += sum(1 for b in branches if b.gen_completed)
        ledger.visual_feedback += sum(1 for b in branches if b.feedback_completed)
        self._check_budget(t0)

        pairs = [(b.candidate, b.feedback) for b in branches]
        with _timed(timings, "synthesize"):
            final = self.agents.synthesize(task.query, task.dataset_description, pairs)
        ledger.editor += 1
        self._check_budget(t0)

        # Final execution is plumbing for the benchmark's executable rate,
        # not an agent call: it has no ledger category.
        with _timed(timings, "final_execution"):
            final_outcome = self._execute_candidate(final, task, store, slot="final")

        return RunRecord(
            input=task,
            config=config,
            paths=tuple(paths),
            candidates=tuple(b.candidate for b in branches),
            outcomes=tuple(b.outcome for b in branches),
            feedback=tuple(b.feedback for b in branches if b.feedback is not None),
            final=final,
            final_outcome=final_outcome,
            ledger=ledger,
        )

    def _run_baseline(self, task: TaskInput, store: Path, timings: dict[str, float]) -> RunRecord:
        ledger = StageLedger()
        with _timed(timings, "generate"):
            if self.config.mode is Mode.ZERO_SHOT:
                candidate = self.agents.zero_shot_generate(task.query, task.dataset_description)
            else:
                candidate = self.agents.cot_generate(task.query, task.dataset_description)
        ledger.code_generation += 1

        with _timed(timings, "final_execution"):
            outcome = self._execute_candidate(candidate, task, store, slot="final")

        return RunRecord(
            input=task,
            config=self.config,
            paths=(),
            candidates=(candidate,),
            outcomes=(outcome,),
            feedback=(),
            final=candidate,
            final_outcome=outcome,
            ledger=ledger,
        )

    def _branch(self, task: TaskInput, path: ReasoningPath, store: Path) -> BranchResult:
        """One independent branch; every failure is captured into its slots."""
        config = self.config
        try:
            candidate = self.agents.generate_code(task.dataset_description, path, config.gen_temperature)
            gen_completed = True
        except (GatewayError, VisPathError) as exc:
            candidate = CandidateScript(
                path_index=path.index,
                source=f"# code generation failed\n# {truncate_error(str(exc), 500)}",
                origin=Origin.MULTI_PATH,
            )
            gen_completed = False
            outcome = ExecutionOutcome(
                ok=False,
                error_text=truncate_error(f"code generation failed: {exc}", config.max_error_chars),
            )

        if gen_completed:
            outcome = self._execute_candidate(candidate, task, store, slot=f"branch_{path.index}")

        feedback: FeedbackReport | None = None
        feedback_completed = False
        if config.mode in (Mode.FULL, Mode.BINARY_FEEDBACK):
            try:
                figure_bytes = None
                if outcome.ok and config.mode is Mode.FULL:
                    figure_bytes = (store / outcome.figures[0]).read_bytes()
                feedback = self.agents.evaluate_candidate(
                    task.query, candidate, outcome, config.mode, figure_bytes=figure_bytes
                )
                feedback_completed = True
            except (GatewayError, OSError) as exc:
                message = f"review unavailable: {exc}"
                feedback = FeedbackReport(
                    path_index=path.index,
                    semantic_alignment=message,
                    data_correctness=message,
                    visual_quality=message,
                    verdict=Verdict.DISCARD,
                    raw_text=message,
                )

        return BranchResult(path, candidate, outcome, feedback, gen_completed, feedback_completed)

    def _execute_candidate(self, candidate: CandidateScript, task: TaskInput,
                           store: Path, slot: str) -> ExecutionOutcome:
        """Execute in a throwaway scratch directory, then move any figures
        into the record store under a slot-scoped name."""
        scratch = store / "tmp" / f"{slot}-{uuid.uuid4().hex[:8]}"
        job = SandboxJob(
            script=candidate.source,
            data_files=task.data_files,
            workdir=str(scratch),
            figure_dir=str(scratch / "figures"),
            timeout=self.config.exec_timeout,
        )
        try:
            outcome = execute(candidate, job, self.transport)
            if outcome.ok:
                outcome = self._ingest_figures(outcome, store, slot)
            elif not outcome.timed_out:
                outcome = ExecutionOutcome(
                    ok=False,
                    error_text=truncate_error(outcome.error_text, self.config.max_error_chars),
                    wall_time_ms=outcome.wall_time_ms,
                )
            return outcome
        finally:
            shutil.rmtree(scratch, ignore_errors=True)

    @staticmethod
    def _ingest_figures(outcome: ExecutionOutcome, store: Path, slot: str) -> ExecutionOutcome:
        dest_dir = store / FIGURES_DIRNAME / slot
        dest_dir.mkdir(parents=True, exist_ok=True)
        refs: list[str] = []
        for n, src in enumerate(outcome.figures, start=1):
            suffix = Path(src).suffix or ".png"
            dest = dest_dir / f"fig_{n}{suffix}"
            shutil.copyfile(src, dest)
            refs.append(dest.relative_to(store).as_posix())
        return ExecutionOutcome(ok=True, figures=tuple(refs), wall_time_ms=outcome.wall_time_ms)

    # -- small helpers -----------------------------------------------------

    def _validate_task(self, task: TaskInput) -> None:
        missing = [p for _, p in task.data_files if not Path(p).is_file()]
        if missing:
            raise ConfigError([f"data file not found: {p}" for p in missing])

    def _check_budget(self, t0: float) -> None:
        if time.monotonic() - t0 > self.config.run_budget:
            raise _BudgetExceeded(f"run budget of {self.config.run_budget:g}s exceeded")

    def _transcript_ids(self, mark: int) -> tuple[int, ...]:
        return tuple(entry.exchange_id for entry in self.gateway.entries_since(mark))

    def _partial_record(self, task: TaskInput, store: Path, mark: int, started_at: str,
                        timings: dict[str, float], failure: str) -> RunRecord:
        record = RunRecord(
            input=task,
            config=self.config,
            paths=(),
            candidates=(),
            outcomes=(),
            feedback=(),
            final=None,
            final_outcome=None,
            ledger=StageLedger(),
            transcripts=self._transcript_ids(mark),
            started_at=started_at,
            finished_at=_utc_now(),
            stage_timings=timings,
            failure=failure,
        )
        try:
            return persist_run(record, store)
        except VisPathError:
            logger.exception("could not persist partial record for %s", task.task_id)
            return record


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class _timed:
    def __init__(self, sink: dict[str, float], key: str):
        self.sink, self.key = sink, key

    def __enter__(self):
        self.t0 = time.monotonic()

    def __exit__(self, *exc_info):
        self.sink[self.key] = round((time.monotonic() - self.t0) * 1000, 3)
        return False
