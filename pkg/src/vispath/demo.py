"""Offline building blocks: canned scripted-backend rules and a stub
transport. These make the whole engine runnable with no model provider
and no sandbox runner installed, which is how the test suite and the CLI
demo mode operate.
"""

from __future__ import annotations

import base64
import re
from pathlib import Path

from .executor import RawResult, SandboxJob
from .gateway import ChatRequest, RoleTag, ScriptedBackend

# Smallest valid PNG (1x1 transparent); stands in for a rendered figure.
TINY_PNG = base64.b64decode(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR4nGNg"
    "YGBgAAAABQABh6FO1AAAAABJRU5ErkJggg=="
)

DEMO_SCRIPT = """\
import pandas as pd
import matplotlib.pyplot as plt

values = pd.Series([3, 7, 5, 9], index=["Q1", "Q2", "Q3", "Q4"])
fig, ax = plt.subplots(figsize=(5, 3))
values.plot.bar(ax=ax, color="#4477aa")
ax.set_xlabel("quarter")
ax.set_ylabel("value")
ax.set_title("Demo chart")
plt.tight_layout()
plt.show()
"""

_K_RE = re.compile(r"exactly (\d+) alternative plans")

_CHART_KINDS = ("bar chart", "line chart", "scatter plot", "area chart",
                "histogram", "box plot", "heatmap", "pie chart")


def _plans_responder(request: ChatRequest) -> str:
    m = _K_RE.search(request.last_user_text)
    k = int(m.group(1)) if m else 3
    blocks = []
    for i in range(1, k + 1):
        kind = _CHART_KINDS[(i - 1) % len(_CHART_KINDS)]
        blocks.append(
            f"PLAN {i}: read the data and draw a {kind}\n"
            f"Chart type: {kind}\n"
            f"Data handling: use the columns as described, no aggregation\n"
            f"Encodings: x = first column, y = second column\n"
            f"Preprocessing: none"
        )
    return "\n\n".join(blocks)


def _code_response(request: ChatRequest) -> str:
    return f"Here is the script.\n\n```python\n{DEMO_SCRIPT}```\n"


FEEDBACK_RESPONSE = (
    "Semantic alignment: the chart answers the request directly.\n"
    "Data correctness: columns and units match the dataset description.\n"
    "Visual quality: axes are labeled and the layout is readable.\n"
    "Verdict: usable"
)


def demo_rules(backend: ScriptedBackend | None = None) -> ScriptedBackend:
    """Deterministic canned behavior for every role."""
    backend = backend or ScriptedBackend()
    backend.add_rule(RoleTag.MPA, r"alternative plans", _plans_responder)
    backend.add_rule(RoleTag.CODE, r".", _code_response)
    backend.add_rule(RoleTag.FB, r".", FEEDBACK_RESPONSE)
    backend.add_rule(RoleTag.SYN, r".", _code_response)
    backend.add_rule(RoleTag.BASELINE, r".", _code_response)
    backend.add_rule(RoleTag.JUDGE, r".", "85")
    return backend


class StubTransport:
    """In-process transport that fakes a successful render.

    It writes a real PNG into the job's figure directory, so everything
    downstream (figure ingestion, feedback attachments, judging) handles
    authentic files. Per-job behavior can be overridden for tests.
    """

    def __init__(self, figures_per_job: int = 1):
        self.figures_per_job = figures_per_job

    def launch(self, job: SandboxJob) -> object:
        return job

    def wait(self, handle: object, timeout: float) -> RawResult:
        job = handle
        assert isinstance(job, SandboxJob)
        figure_dir = Path(job.figure_dir)
        paths = []
        for n in range(1, self.figures_per_job + 1):
            path = figure_dir / f"fig_{n}.png"
            path.write_bytes(TINY_PNG)
            paths.append(str(path))
        return RawResult(status="ok", figures=tuple(paths))

    def kill(self, handle: object) -> None:
        pass
