"""Shared builders for the test suite: deterministic scripted rules,
stub transports with controllable per-branch behavior, and record
factories."""

from __future__ import annotations

import re
import time
from pathlib import Path

from vispath.core import (
    CandidateScript,
    ExecutionOutcome,
    FeedbackReport,
    Origin,
    PipelineConfig,
    ReasoningPath,
    RunRecord,
    StageLedger,
    TaskInput,
    Verdict,
)
from vispath.demo import TINY_PNG
from vispath.errors import TransportTimeoutError
from vispath.executor import RawResult, SandboxJob
from vispath.gateway import ChatRequest, Message, RoleTag, ScriptedBackend

_K_RE = re.compile(r"exactly (\d+) alternative plans")
_PLAN_N_RE = re.compile(r"PLAN (\d+):")

FEEDBACK_TEXT = (
    "Semantic alignment: matches the request.\n"
    "Data correctness: columns check out.\n"
    "Visual quality: clean and labeled.\n"
    "Verdict: usable"
)

FINAL_SCRIPT = "# final\nimport matplotlib.pyplot as plt\nplt.plot([1, 2])\nplt.show()\n"


def plans_text(k: int) -> str:
    return "\n\n".join(
        f"PLAN {i}: interpretation {i}\nChart type: bar chart\nEncodings: x, y"
        for i in range(1, k + 1)
    )


def plans_responder(request: ChatRequest) -> str:
    m = _K_RE.search(request.last_user_text)
    return plans_text(int(m.group(1)) if m else 3)


def branch_code_responder(request: ChatRequest) -> str:
    """Script tagged with the branch index taken from the plan text."""
    m = _PLAN_N_RE.search(request.last_user_text)
    n = m.group(1) if m else "1"
    return f"```python\n# branch {n}\nimport matplotlib.pyplot as plt\nplt.plot([{n}])\nplt.show()\n```"


def scripted_backend(exclude: tuple[RoleTag, ...] = ()) -> ScriptedBackend:
    """Deterministic rules for every role, branch-tagged code output.

    ``exclude`` skips listed roles so a test can supply its own rule.
    """
    backend = ScriptedBackend()
    defaults = (
        (RoleTag.MPA, r"alternative plans", plans_responder),
        (RoleTag.CODE, r".", branch_code_responder),
        (RoleTag.FB, r".", FEEDBACK_TEXT),
        (RoleTag.SYN, r".", f"```python\n{FINAL_SCRIPT}```"),
        (RoleTag.BASELINE, r".", "```python\n# baseline\nplt.plot([0])\n```"),
        (RoleTag.JUDGE, r".", "85"),
    )
    for role, pattern, responder in defaults:
        if role not in exclude:
            backend.add_rule(role, pattern, responder)
    return backend


_BRANCH_MARK_RE = re.compile(r"# branch (\d+)")


class BehaviorStubTransport:
    """In-process transport whose behavior depends on the script's branch tag.

    ``behaviors`` maps branch index -> one of "ok", "error", "zero",
    "timeout", "raise"; unlisted branches succeed. ``delays`` maps branch
    index -> seconds slept inside wait(), for scheduling-order tests.
    """

    def __init__(self, behaviors: dict[int, str] | None = None,
                 delays: dict[int, float] | None = None,
                 default: str = "ok"):
        self.behaviors = behaviors or {}
        self.delays = delays or {}
        self.default = default
        self.seen_workdirs: list[str] = []
        self.kills = 0

    def launch(self, job: SandboxJob) -> object:
        self.seen_workdirs.append(job.workdir)
        return job

    def wait(self, handle: object, timeout: float) -> RawResult:
        job = handle
        assert isinstance(job, SandboxJob)
        m = _BRANCH_MARK_RE.search(job.script)
        branch = int(m.group(1)) if m else 0
        time.sleep(self.delays.get(branch, 0.0))
        behavior = self.behaviors.get(branch, self.default)
        if behavior == "ok":
            path = Path(job.figure_dir) / "fig_1.png"
            path.write_bytes(TINY_PNG)
            return RawResult(status="ok", figures=(str(path),))
        if behavior == "zero":
            return RawResult(status="ok", figures=())
        if behavior == "error":
            return RawResult(status="error",
                             traceback=f"Traceback (most recent call last):\nValueError: branch {branch} boom")
        if behavior == "timeout":
            raise TransportTimeoutError(f"exceeded {timeout:g}s")
        raise RuntimeError(f"transport blew up on branch {branch}")

    def kill(self, handle: object) -> None:
        self.kills += 1


def make_request(role: RoleTag = RoleTag.CODE, text: str = "write code",
                 system: str = "system prompt", temperature: float = 0.2,
                 model: str = "m1", attachments: tuple[bytes, ...] = ()) -> ChatRequest:
    return ChatRequest(
        role_tag=role,
        messages=(Message("system", system), Message("user", text, attachments=attachments)),
        temperature=temperature,
        model_id=model,
    )


def make_record(k: int = 3, with_figures: bool = False, figure_dir: Path | None = None) -> RunRecord:
    """A structurally complete full-mode record for persistence tests.

    With ``with_figures`` the outcomes reference real PNG files created
    under ``figure_dir`` (absolute paths, as produced outside a store).
    """
    task = TaskInput(
        task_id="rec-1",
        query="plot the things",
        dataset_description="things.csv: a, b",
    )
    paths = tuple(
        ReasoningPath(index=i, plan_text=f"PLAN {i}: idea", chart_intent="bar chart")
        for i in range(1, k + 1)
    )
    candidates = tuple(
        CandidateScript(path_index=i, source=f"# branch {i}\nplot()", origin=Origin.MULTI_PATH)
        for i in range(1, k + 1)
    )
    if with_figures:
        assert figure_dir is not None
        figs = []
        for i in range(1, k + 1):
            p = Path(figure_dir) / f"ext_{i}.png"
            p.write_bytes(TINY_PNG)
            figs.append(str(p))
        outcomes = tuple(
            ExecutionOutcome(ok=True, figures=(figs[i - 1],), wall_time_ms=12) for i in range(1, k + 1)
        )
    else:
        outcomes = tuple(
            ExecutionOutcome(ok=False, error_text=f"ValueError: branch {i}", wall_time_ms=30)
            for i in range(1, k + 1)
        )
    feedback = tuple(
        FeedbackReport(
            path_index=i,
            semantic_alignment="aligned",
            data_correctness="correct",
            visual_quality="fine",
            verdict=Verdict.USABLE,
            raw_text=FEEDBACK_TEXT,
        )
        for i in range(1, k + 1)
    )
    final = CandidateScript(path_index=0, source=FINAL_SCRIPT, origin=Origin.SYNTHESIZED)
    return RunRecord(
        input=task,
        config=PipelineConfig(k=k),
        paths=paths,
        candidates=candidates,
        outcomes=outcomes,
        feedback=feedback,
        final=final,
        final_outcome=ExecutionOutcome(ok=False, error_text="no figure produced"),
        ledger=StageLedger(1, k, k, 1),
        transcripts=tuple(range(1, 2 * k + 3)),
        started_at="2024-02-11T10:00:00.000+00:00",
        finished_at="2024-02-11T10:00:05.000+00:00",
        stage_timings={"expand_paths": 10.0, "branches": 40.0},
    )


def make_tasks(n: int, prefix: str = "q") -> list[TaskInput]:
    return [
        TaskInput(
            task_id=f"{prefix}-{i:03d}",
            query=f"plot series {i} against time",
            dataset_description=f"series_{i}.csv: t, value",
        )
        for i in range(n)
    ]
