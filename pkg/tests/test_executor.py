"""Execution operator: routing exclusivity, truncation, timeouts,
isolation, and the subprocess wire protocol."""

from __future__ import annotations

import random
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest

from helpers import BehaviorStubTransport
from vispath.core import CandidateScript, Origin
from vispath.errors import TransportUnavailableError
from vispath.executor import (
    RawResult,
    SandboxJob,
    SubprocessTransport,
    execute,
    parse_runner_stdout,
    prepare_workdir,
    truncate_error,
)


def make_job(tmp_path: Path, script: str = "# branch 1\nplot()", timeout: float = 5.0,
             slot: str = "j1", data_files=()) -> SandboxJob:
    base = tmp_path / slot
    return SandboxJob(
        script=script,
        data_files=tuple(data_files),
        workdir=str(base),
        figure_dir=str(base / "figures"),
        timeout=timeout,
    )


def make_candidate(script: str = "# branch 1\nplot()") -> CandidateScript:
    return CandidateScript(path_index=1, source=script, origin=Origin.MULTI_PATH)


class TestTruncateError:
    def test_short_text_unchanged(self):
        assert truncate_error("short", 4000) == "short"

    def test_boundary_exact(self):
        text = "x" * 4000
        assert truncate_error(text, 4000) == text

    def test_tail_kept_with_marker(self):
        text = "y" * 5000
        out = truncate_error(text, 4000)
        assert out.endswith("y" * 4000)
        assert out.startswith("[...truncated...]")
        assert len(out) == 4000 + len("[...truncated...]\n")

    def test_informative_suffix_survives(self):
        # Oversize synthetic traceback; the final line is the one that matters.
        trace = ("File line blah\n" * 600) + "KeyError: 'col'"
        out = truncate_error(trace, 400)
        assert out.endswith("KeyError: 'col'")

    def test_limit_must_be_positive(self):
        with pytest.raises(ValueError):
            truncate_error("x", 0)


class TestPrepareWorkdir:
    def test_data_files_copied(self, tmp_path):
        source = tmp_path / "input.csv"
        source.write_text("a,b\n1,2\n")
        job = make_job(tmp_path, data_files=(("input.csv", str(source)),))
        prepare_workdir(job)
        assert (Path(job.workdir) / "input.csv").read_text() == "a,b\n1,2\n"

    def test_nonempty_figure_dir_rejected(self, tmp_path):
        job = make_job(tmp_path)
        Path(job.figure_dir).mkdir(parents=True)
        (Path(job.figure_dir) / "stale.png").write_bytes(b"x")
        with pytest.raises(ValueError, match="figure_dir"):
            prepare_workdir(job)

    def test_zero_timeout_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            make_job(tmp_path, timeout=0)


class TestRouting:
    def test_ok_with_figure(self, tmp_path):
        outcome = execute(make_candidate(), make_job(tmp_path), BehaviorStubTransport())
        assert outcome.ok
        assert len(outcome.figures) == 1
        assert Path(outcome.figures[0]).is_file()
        assert outcome.error_text == ""

    def test_error_passthrough(self, tmp_path):
        transport = BehaviorStubTransport(behaviors={1: "error"})
        outcome = execute(make_candidate(), make_job(tmp_path), transport)
        assert not outcome.ok
        assert "ValueError" in outcome.error_text
        assert outcome.figures == ()

    def test_ok_without_figures_is_failure(self, tmp_path):
        transport = BehaviorStubTransport(behaviors={1: "zero"})
        outcome = execute(make_candidate(), make_job(tmp_path), transport)
        assert not outcome.ok
        assert outcome.error_text == "no figure produced"

    def test_reported_but_missing_figure_is_failure(self, tmp_path):
        class Phantom(BehaviorStubTransport):
            def wait(self, handle, timeout):
                return RawResult(status="ok", figures=("does/not/exist.png",))

        outcome = execute(make_candidate(), make_job(tmp_path), Phantom())
        assert not outcome.ok
        assert outcome.error_text == "no figure produced"

    def test_transport_timeout_signal(self, tmp_path):
        transport = BehaviorStubTransport(behaviors={1: "timeout"})
        outcome = execute(make_candidate(), make_job(tmp_path, timeout=1.0), transport)
        assert outcome.timed_out
        assert not outcome.ok
        assert "1" in outcome.error_text

    def test_transport_exception_becomes_failure(self, tmp_path):
        transport = BehaviorStubTransport(behaviors={1: "raise"})
        outcome = execute(make_candidate(), make_job(tmp_path), transport)
        assert not outcome.ok
        assert "transport failure" in outcome.error_text

    def test_rogue_transport_bounded_by_engine(self, tmp_path):
        class Sleeper(BehaviorStubTransport):
            def wait(self, handle, timeout):  # ignores the timeout entirely
                time.sleep(10)
                return RawResult(status="ok")

        transport = Sleeper()
        t0 = time.monotonic()
        outcome = execute(make_candidate(), make_job(tmp_path, timeout=1.0), transport)
        elapsed = time.monotonic() - t0
        assert outcome.timed_out
        assert elapsed < 3.0  # timeout + slack
        assert transport.kills == 1

    def test_randomized_behaviors_keep_exclusivity(self, tmp_path):
        rng = random.Random(7)
        choices = ("ok", "error", "zero", "timeout")
        for n in range(120):
            behavior = rng.choice(choices)
            transport = BehaviorStubTransport(behaviors={1: behavior})
            outcome = execute(make_candidate(), make_job(tmp_path, slot=f"r{n}", timeout=0.5), transport)
            assert outcome.ok != bool(outcome.error_text)
            assert outcome.ok == bool(outcome.figures)
            if outcome.timed_out:
                assert not outcome.ok


class TestIsolation:
    def test_concurrent_branches_have_private_directories(self, tmp_path):
        transport = BehaviorStubTransport(delays={1: 0.05, 2: 0.01, 3: 0.03})
        jobs = [
            (make_candidate(f"# branch {i}\nplot()"), make_job(tmp_path, f"# branch {i}\nplot()", slot=f"b{i}"))
            for i in (1, 2, 3)
        ]
        with ThreadPoolExecutor(max_workers=3) as pool:
            outcomes = list(pool.map(lambda cj: execute(cj[0], cj[1], transport), jobs))
        assert all(o.ok for o in outcomes)
        assert len(set(transport.seen_workdirs)) == 3
        figure_paths = {o.figures[0] for o in outcomes}
        assert len(figure_paths) == 3  # directory-scoped names never collide


RUNNER_OK = (
    "import json, sys, pathlib\n"
    "job = json.load(sys.stdin)\n"
    "fig = pathlib.Path(job['figure_dir']) / 'fig_1.png'\n"
    "fig.write_bytes(b'\\x89PNG')\n"
    "print(json.dumps({'status': 'ok', 'figures': [str(fig)]}))\n"
)
RUNNER_ERROR = (
    "import json, sys\n"
    "sys.stdin.read()\n"
    "print(json.dumps({'status': 'error', 'traceback': 'ZeroDivisionError: division by zero'}))\n"
)
RUNNER_GARBAGE = "import sys\nsys.stdin.read()\nprint('I am not JSON')\n"
RUNNER_SLEEPER = "import time, sys\nsys.stdin.read()\ntime.sleep(10)\n"


def python_transport(snippet: str) -> SubprocessTransport:
    return SubprocessTransport(command=(sys.executable, "-c", snippet))


class TestSubprocessTransport:
    def test_ok_result(self, tmp_path):
        outcome = execute(make_candidate(), make_job(tmp_path), python_transport(RUNNER_OK))
        assert outcome.ok
        assert len(outcome.figures) == 1

    def test_error_result(self, tmp_path):
        outcome = execute(make_candidate(), make_job(tmp_path), python_transport(RUNNER_ERROR))
        assert not outcome.ok
        assert "ZeroDivisionError" in outcome.error_text

    def test_garbage_stdout_is_protocol_violation_with_bytes_quoted(self, tmp_path):
        outcome = execute(make_candidate(), make_job(tmp_path), python_transport(RUNNER_GARBAGE))
        assert not outcome.ok
        assert "protocol violation" in outcome.error_text
        assert "I am not JSON" in outcome.error_text

    def test_timeout_kills_and_flags(self, tmp_path):
        t0 = time.monotonic()
        outcome = execute(make_candidate(), make_job(tmp_path, timeout=1.0), python_transport(RUNNER_SLEEPER))
        assert outcome.timed_out
        assert time.monotonic() - t0 < 3.0

    def test_missing_binary_is_transport_unavailable(self, tmp_path):
        transport = SubprocessTransport(command=("definitely-not-a-real-runner-binary",))
        with pytest.raises(TransportUnavailableError):
            execute(make_candidate(), make_job(tmp_path), transport)


class TestProtocolParse:
    def test_ok_payload(self):
        raw = parse_runner_stdout('{"status": "ok", "figures": ["a.png"]}')
        assert raw.status == "ok"
        assert raw.figures == ("a.png",)

    def test_error_payload(self):
        raw = parse_runner_stdout('{"status": "error", "traceback": "boom"}')
        assert raw.status == "error"
        assert raw.traceback == "boom"

    def test_unknown_status_is_violation(self):
        raw = parse_runner_stdout('{"status": "meh"}')
        assert raw.status == "error"
        assert "protocol violation" in raw.traceback

    def test_stderr_tail_included_for_diagnostics(self):
        raw = parse_runner_stdout("", stderr="warning: something odd")
        assert "something odd" in raw.traceback
