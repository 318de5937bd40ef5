"""Execute one untrusted plotting script and report over the wire protocol.

Input (stdin, one JSON object):

    {"script": ..., "data_files": [{"name": ..., "path": ...}], "figure_dir": ...}

Output (stdout, exactly one JSON object, nothing else):

    {"status": "ok", "figures": [...]}  or  {"status": "error", "traceback": ...}

The process exits 0 in both cases; the protocol carries the result.
Scripts run in a fresh namespace within this process: the engine's outer
timeout already bounds runaways, and one process per job keeps state from
leaking between candidates.
"""

from __future__ import annotations

import contextlib
import io
import json
import shutil
import sys
import traceback
from pathlib import Path

SAVE_DPI = 100


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload))
    sys.stdout.write("\n")
    sys.stdout.flush()


def _protocol_error(message: str) -> dict:
    return {"status": "error", "traceback": f"protocol violation: {message}"}


def _place_data_files(entries: list) -> None:
    """Make each named data file available in the working directory.

    The engine normally pre-populates the directory; copying here keeps
    the runner usable standalone.
    """
    for entry in entries or []:
        name, source = entry["name"], entry["path"]
        dest = Path.cwd() / name
        if dest.exists() or not Path(source).is_file():
            continue
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(source, dest)


def run_job(job: dict) -> dict:
    """Execute the job's script headlessly and collect its figures."""
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt
    from matplotlib.figure import Figure

    script = job.get("script")
    figure_dir = Path(job.get("figure_dir", "figures"))
    if not isinstance(script, str) or not script.strip():
        return _protocol_error("job has no script")
    figure_dir.mkdir(parents=True, exist_ok=True)
    _place_data_files(job.get("data_files"))

    # Interactive display must not block or discard anything: show becomes
    # a no-op and the figures stay open for capture afterwards.
    plt.show = lambda *args, **kwargs: None

    # Track the script's own savefig calls so already-saved figures are
    # not captured twice and self-saved files count as rendered output.
    saved_paths: list[Path] = []
    saved_figures: set[int] = set()
    original_savefig = Figure.savefig

    def tracking_savefig(self, fname, *args, **kwargs):
        result = original_savefig(self, fname, *args, **kwargs)
        if isinstance(fname, (str, Path)):
            saved_paths.append(Path(fname).resolve())
            saved_figures.add(id(self))
        return result

    Figure.savefig = tracking_savefig
    namespace = {"__name__": "__main__", "__file__": str(Path.cwd() / "candidate.py")}
    stdin_backup = sys.stdin
    try:
        sys.stdin = io.StringIO("")  # input() must fail fast, not block
        with contextlib.redirect_stdout(sys.stderr):
            exec(compile(script, "candidate.py", "exec"), namespace)
    except BaseException:
        return {"status": "error", "traceback": traceback.format_exc()}
    finally:
        sys.stdin = stdin_backup
        Figure.savefig = original_savefig

    # Remaining open figures that the script never saved itself are
    # captured as fig_<n>.png in creation order.
    auto_index = 0
    for num in plt.get_fignums():
        figure = plt.figure(num)
        if id(figure) in saved_figures:
            continue
        auto_index += 1
        target = figure_dir / f"fig_{auto_index}.png"
        try:
            figure.savefig(target, dpi=SAVE_DPI, bbox_inches="tight")
        except Exception:
            return {"status": "error", "traceback": traceback.format_exc()}
        saved_paths.append(target.resolve())

    figures: list[str] = []
    seen: set[str] = set()
    for path in saved_paths:
        key = str(path)
        if key not in seen and path.is_file():
            seen.add(key)
            figures.append(key)
    return {"status": "ok", "figures": figures}


def main() -> int:
    raw = sys.stdin.read()
    try:
        job = json.loads(raw)
        if not isinstance(job, dict):
            raise ValueError("payload is not an object")
    except (json.JSONDecodeError, ValueError) as exc:
        _emit(_protocol_error(f"malformed job payload: {exc}"))
        return 0
    _emit(run_job(job))
    return 0


if __name__ == "__main__":
    sys.exit(main())
