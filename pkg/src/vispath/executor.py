"""Deterministic execution of one candidate script in an isolated sandbox.

The engine talks to a runner process over a bit-exact wire protocol: one
JSON object on the runner's stdin

    {"script": ..., "data_files": [{"name": ..., "path": ...}], "figure_dir": ...}

and one JSON object on its stdout

    {"status": "ok", "figures": [...]}  or  {"status": "error", "traceback": ...}

Anything else on stdout is a protocol violation routed to the error
branch with the raw bytes quoted. Success means a rendered figure: a
script that exits cleanly without producing one is routed to the error
branch with a synthetic message. There is no debugging loop and no
re-execution; failures carry forward as signals.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .core import CandidateScript, ExecutionOutcome
from .errors import TransportTimeoutError, TransportUnavailableError

NO_FIGURE_MESSAGE = "no figure produced"
TRUNCATION_MARKER = "[...truncated...]\n"

#: Extra seconds granted to a transport before the engine declares timeout
#: on its behalf; bounds even transports that ignore the timeout argument.
WAIT_GRACE_SECONDS = 1.0

DEFAULT_RUNNER_COMMAND = ("vispath-runner",)


@dataclass(frozen=True)
class SandboxJob:
    """One execution request: a fresh private directory per branch."""

    script: str
    data_files: tuple[tuple[str, str], ...]  # (name, source path)
    workdir: str
    figure_dir: str
    timeout: float  # seconds

    def __post_init__(self):
        object.__setattr__(self, "data_files", tuple(tuple(p) for p in self.data_files))
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")


@dataclass(frozen=True)
class RawResult:
    """What a transport reports back, before routing."""

    status: str  # "ok" | "error"
    figures: tuple[str, ...] = ()
    traceback: str = ""


class RunnerTransport(Protocol):
    """Process-shaped contract; tests may satisfy it in-process."""

    def launch(self, job: SandboxJob) -> object: ...

    def wait(self, handle: object, timeout: float) -> RawResult:
        """Return the raw result, or raise TransportTimeoutError."""

    def kill(self, handle: object) -> None: ...


def truncate_error(text: str, limit: int) -> str:
    """Keep the last ``limit`` characters: tracebacks end with the
    informative line."""
    if limit <= 0:
        raise ValueError("limit must be > 0")
    if len(text) <= limit:
        return text
    return TRUNCATION_MARKER + text[-limit:]


def prepare_workdir(job: SandboxJob) -> None:
    """Create the private working directory and copy the data files in."""
    workdir = Path(job.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    figure_dir = Path(job.figure_dir)
    figure_dir.mkdir(parents=True, exist_ok=True)
    if any(figure_dir.iterdir()):
        raise ValueError(f"figure_dir not empty at job start: {figure_dir}")
    for name, source in job.data_files:
        dest = workdir / name
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(source, dest)


def execute(script: CandidateScript, job: SandboxJob, transport: RunnerTransport) -> ExecutionOutcome:
    """Run one candidate and route the result into an exclusive outcome.

    Routing: reported figures that exist on disk make a success; an ok
    status without any surviving figure, an error status, and a timeout
    all route to the failure branch with an informative error text.
    The engine bounds the wait itself, so even a transport that ignores
    its timeout argument cannot stall a branch past timeout + grace.
    """
    prepare_workdir(job)
    start = time.monotonic()
    handle = transport.launch(job)
    raw, timed_out = _bounded_wait(transport, handle, job.timeout)
    wall_ms = int((time.monotonic() - start) * 1000)

    if timed_out:
        return ExecutionOutcome(
            ok=False,
            error_text=f"execution timed out after {job.timeout:g}s",
            wall_time_ms=wall_ms,
            timed_out=True,
        )

    if raw.status == "ok":
        figures = _existing_figures(raw.figures, job)
        if figures:
            return ExecutionOutcome(ok=True, figures=figures, wall_time_ms=wall_ms)
        return ExecutionOutcome(ok=False, error_text=NO_FIGURE_MESSAGE, wall_time_ms=wall_ms)

    detail = raw.traceback or "script failed with no traceback"
    return ExecutionOutcome(ok=False, error_text=detail, wall_time_ms=wall_ms)


def _bounded_wait(transport: RunnerTransport, handle: object, timeout: float) -> tuple[RawResult, bool]:
    box: dict[str, object] = {}
    done = threading.Event()

    def worker():
        try:
            box["result"] = transport.wait(handle, timeout)
        except TransportTimeoutError:
            box["timeout"] = True
        except BaseException as exc:  # transport bug: surface as job failure
            box["error"] = exc
        finally:
            done.set()

    thread = threading.Thread(target=worker, daemon=True)
    thread.start()
    if not done.wait(timeout + WAIT_GRACE_SECONDS):
        try:
            transport.kill(handle)
        except Exception:
            pass
        return RawResult(status="error"), True
    if "timeout" in box:
        return RawResult(status="error"), True
    if "error" in box:
        exc = box["error"]
        if isinstance(exc, TransportUnavailableError):
            raise exc
        return RawResult(status="error", traceback=f"transport failure: {exc!r}"), False
    return box["result"], False  # type: ignore[return-value]


def _existing_figures(reported: tuple[str, ...], job: SandboxJob) -> tuple[str, ...]:
    kept: list[str] = []
    for ref in reported:
        p = Path(ref)
        candidates = (p,) if p.is_absolute() else (Path(job.workdir) / p, p)
        for candidate in candidates:
            if candidate.is_file():
                kept.append(str(candidate))
                break
    return tuple(kept)


@dataclass
class SubprocessTransport:
    """The real transport: spawns one runner process per job.

    The runner executable is found by command; a missing binary raises
    transport-unavailable, which is an environment problem, not a script
    failure. The job payload travels on stdin, the result on stdout,
    cwd is the job's private working directory.
    """

    command: tuple[str, ...] = DEFAULT_RUNNER_COMMAND

    def launch(self, job: SandboxJob) -> object:
        payload = json.dumps(
            {
                "script": job.script,
                "data_files": [{"name": n, "path": p} for n, p in job.data_files],
                "figure_dir": job.figure_dir,
            }
        )
        try:
            proc = subprocess.Popen(
                list(self.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                cwd=job.workdir,
                text=True,
            )
        except (OSError, FileNotFoundError) as exc:
            raise TransportUnavailableError(
                f"cannot launch runner {' '.join(self.command)!r}: {exc}"
            ) from exc
        return _SubprocessHandle(proc, payload)

    def wait(self, handle: object, timeout: float) -> RawResult:
        assert isinstance(handle, _SubprocessHandle)
        proc = handle.proc
        try:
            stdout, stderr = proc.communicate(handle.payload, timeout=timeout)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.communicate()
            raise TransportTimeoutError(f"runner exceeded {timeout:g}s")
        return parse_runner_stdout(stdout, stderr)

    def kill(self, handle: object) -> None:
        if isinstance(handle, _SubprocessHandle):
            handle.proc.kill()


@dataclass
class _SubprocessHandle:
    proc: subprocess.Popen
    payload: str


def parse_runner_stdout(stdout: str, stderr: str = "") -> RawResult:
    """Strict protocol parse: exactly one JSON object, nothing else."""
    body = stdout.strip()
    try:
        data = json.loads(body)
        if not isinstance(data, dict):
            raise ValueError("payload is not an object")
        status = data["status"]
        if status == "ok":
            return RawResult(status="ok", figures=tuple(data.get("figures") or ()))
        if status == "error":
            return RawResult(status="error", traceback=str(data.get("traceback", "")))
        raise ValueError(f"unknown status {status!r}")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        detail = f"protocol violation: runner stdout was not a result object: {stdout!r}"
        if stderr.strip():
            detail += f"\nrunner stderr (tail):\n{stderr[-1000:]}"
        return RawResult(status="error", traceback=detail)
