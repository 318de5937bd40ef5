"""The agent roles: multi-path planner, code writer, reviewer, synthesizer,
plus the zero-shot and CoT comparison strategies.

Each agent is a prompt template plus an output parser over the gateway.
Agents are stateless; branch-stage calls may run concurrently. Every
operation makes exactly one gateway call, with at most one reprompt when
the response cannot be parsed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import (
    CandidateScript,
    ExecutionOutcome,
    FeedbackReport,
    Mode,
    Origin,
    PipelineConfig,
    ReasoningPath,
    TaskInput,
    Verdict,
)
from .errors import CodeAbsentError, EmptyCodeError, ParseFailureError
from .gateway import ChatRequest, Gateway, Message, RoleTag

PROMPT_FILES = (
    "mpa.txt",
    "code.txt",
    "fb.txt",
    "fb_binary.txt",
    "syn.txt",
    "syn_nofb.txt",
    "zero_shot.txt",
    "cot.txt",
    "judge.txt",
)

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")
_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_PLAN_SPLIT_RE = re.compile(r"^[ \t]*PLAN\s+(\d+)\s*:", re.MULTILINE | re.IGNORECASE)
_CHART_INTENT_RE = re.compile(r"chart\s*type\s*[:\-]\s*([^\n]+)", re.IGNORECASE)

REPROMPT_PLANS = (
    "REMINDER: your previous reply could not be parsed. Output exactly {k} plans, "
    "each beginning with 'PLAN <n>:' on its own line, numbered 1 through {k}."
)
REPROMPT_CODE = (
    "REMINDER: your previous reply contained no code. Reply with the complete "
    "Python script inside one fenced code block."
)


class PromptError(ParseFailureError):
    """A template could not be loaded or rendered."""


@dataclass(frozen=True)
class PromptTemplate:
    """System prompt plus a user template with {placeholder} fields."""

    role_tag: RoleTag
    system_text: str
    user_template: str

    def __post_init__(self):
        if not self.system_text.strip():
            raise PromptError(f"empty system text for role {self.role_tag.value}")

    def render(self, **values: object) -> str:
        needed = set(_PLACEHOLDER_RE.findall(self.user_template))
        missing = needed - values.keys()
        if missing:
            raise PromptError(f"unbound placeholders {sorted(missing)} in {self.role_tag.value} template")
        return _PLACEHOLDER_RE.sub(lambda m: str(values[m.group(1)]), self.user_template)


def parse_prompt_file(text: str, role_tag: RoleTag, name: str) -> PromptTemplate:
    """Split a prompt file into its [system] and [user] sections."""
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in text.splitlines():
        stripped = line.strip().lower()
        if stripped in ("[system]", "[user]"):
            current = sections.setdefault(stripped[1:-1], [])
            continue
        if current is not None:
            current.append(line)
    if "system" not in sections or "user" not in sections:
        raise PromptError(f"{name}: prompt file needs [system] and [user] sections")
    return PromptTemplate(
        role_tag=role_tag,
        system_text="\n".join(sections["system"]).strip(),
        user_template="\n".join(sections["user"]).strip(),
    )


class PromptLibrary:
    """The fixed per-role prompt files, bundled or from an override directory."""

    _ROLE_BY_NAME = {
        "mpa": RoleTag.MPA,
        "code": RoleTag.CODE,
        "fb": RoleTag.FB,
        "fb_binary": RoleTag.FB,
        "syn": RoleTag.SYN,
        "syn_nofb": RoleTag.SYN,
        "zero_shot": RoleTag.BASELINE,
        "cot": RoleTag.BASELINE,
        "judge": RoleTag.JUDGE,
    }

    def __init__(self, templates: dict[str, PromptTemplate]):
        self._templates = templates

    @classmethod
    def load(cls, prompt_dir: str | Path | None = None) -> "PromptLibrary":
        templates: dict[str, PromptTemplate] = {}
        for filename in PROMPT_FILES:
            stem = filename[: -len(".txt")]
            if prompt_dir is not None:
                text = (Path(prompt_dir) / filename).read_text(encoding="utf-8")
            else:
                text = resources.files("vispath").joinpath("prompts", filename).read_text(encoding="utf-8")
            templates[stem] = parse_prompt_file(text, cls._ROLE_BY_NAME[stem], filename)
        return cls(templates)

    def __getitem__(self, stem: str) -> PromptTemplate:
        return self._templates[stem]


def extract_code(text: str) -> str:
    """Concatenate all fenced code blocks (language tags ignored).

    Without fences, the whole text is accepted only when its first
    non-blank line already looks like code (an import or an assignment);
    otherwise the absence signal is raised.
    """
    blocks = [b.strip("\n") for b in _FENCE_RE.findall(text)]
    blocks = [b for b in blocks if b.strip()]
    if blocks:
        return "\n\n".join(blocks)
    first_line = next((line for line in text.splitlines() if line.strip()), "")
    if re.match(r"^\s*(import\s|from\s+\w|[\w.\[\]'\"]+\s*=[^=])", first_line):
        return text.strip()
    raise CodeAbsentError("no code block found in response")


def _split_plans(text: str) -> list[str]:
    """Break a planner reply into its 'PLAN <n>:' delimited blocks."""
    matches = list(_PLAN_SPLIT_RE.finditer(text))
    plans = []
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        body = text[m.start():end].strip()
        if body:
            plans.append(body)
    return plans


def _chart_intent(plan_text: str) -> str | None:
    m = _CHART_INTENT_RE.search(plan_text)
    if not m:
        return None
    tag = m.group(1).strip().lower().rstrip(".")
    return tag[:60] or None


class Agents:
    """All agent roles behind one gateway, configured per run."""

    def __init__(self, gateway: Gateway, config: PipelineConfig, prompts: PromptLibrary | None = None):
        self.gateway = gateway
        self.config = config
        self.prompts = prompts if prompts is not None else PromptLibrary.load(config.prompt_dir)

    # -- helpers -----------------------------------------------------------

    def _model_for(self, role: RoleTag) -> str:
        if role is RoleTag.FB:
            return self.config.feedback_model
        if role is RoleTag.JUDGE:
            return self.config.judge_model
        return self.config.gen_model

    def _temperature_for(self, role: RoleTag) -> float:
        if role in (RoleTag.FB, RoleTag.JUDGE):
            return self.config.judge_temperature
        return self.config.gen_temperature

    def _request(self, template: PromptTemplate, user_text: str,
                 attachments: tuple[bytes, ...] = ()) -> ChatRequest:
        role = template.role_tag
        return ChatRequest(
            role_tag=role,
            messages=(
                Message("system", template.system_text),
                Message("user", user_text, attachments=attachments),
            ),
            temperature=self._temperature_for(role),
            model_id=self._model_for(role),
        )

    # -- operations --------------------------------------------------------

    def expand_paths(self, task: TaskInput, k: int) -> list[ReasoningPath]:
        """Fan out: one planner call yielding k distinct reasoning paths.

        All k plans come from a single gateway call so query expansion
        counts once per run regardless of k. Duplicate plans are kept:
        redundancy at large k is a behavior under study, not noise to mask.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        template = self.prompts["mpa"]
        user_text = template.render(query=task.query, dataset=task.dataset_description, k=k)

        got = 0
        for text in (user_text, user_text + "\n\n" + REPROMPT_PLANS.format(k=k)):
            response = self.gateway.complete(self._request(template, text))
            plans = _split_plans(response.text)
            if k == 1 and not plans and response.text.strip():
                plans = [response.text.strip()]  # single-path reply may omit the delimiter
            if len(plans) == k:
                return [
                    ReasoningPath(index=i + 1, plan_text=plan, chart_intent=_chart_intent(plan))
                    for i, plan in enumerate(plans)
                ]
            got = len(plans)
        raise ParseFailureError(f"planner returned {got} plans, expected {k} (after reprompt)")

    def generate_code(self, dataset: str, path: ReasoningPath, temperature: float | None = None) -> CandidateScript:
        """Turn one reasoning path into a candidate script.

        The dataset description goes into the prompt verbatim to ground
        column names and types.
        """
        template = self.prompts["code"]
        user_text = template.render(dataset=dataset, plan=path.plan_text)
        source = self._complete_code(template, user_text, temperature)
        return CandidateScript(path_index=path.index, source=source, origin=Origin.MULTI_PATH)

    def evaluate_candidate(
        self,
        query: str,
        script: CandidateScript,
        outcome: ExecutionOutcome,
        mode: Mode,
        figure_bytes: bytes | None = None,
    ) -> FeedbackReport:
        """Review one candidate against the request and its execution result.

        Full mode routes the rendered figure (first one) into the request as
        an image attachment on success and the error text on failure; binary
        mode sends only the executability flag and error text, never pixels.
        Parse failures never abort: fields fall back to the raw reply.
        """
        binary = mode is Mode.BINARY_FEEDBACK
        template = self.prompts["fb_binary" if binary else "fb"]

        attachments: tuple[bytes, ...] = ()
        if binary:
            outcome_text = f"executable: {'yes' if outcome.ok else 'no'}"
            if not outcome.ok:
                outcome_text += f"\nError output:\n{outcome.error_text}"
        elif outcome.ok:
            if figure_bytes is None:
                raise ValueError("full-mode review of an ok outcome needs the rendered figure bytes")
            attachments = (figure_bytes,)
            outcome_text = "The script executed successfully; the rendered figure is attached."
        else:
            note = " (timed out)" if outcome.timed_out else ""
            outcome_text = f"The script failed to produce a figure{note}.\nError output:\n{outcome.error_text}"

        user_text = template.render(query=query, code=script.source, outcome=outcome_text)
        response = self.gateway.complete(self._request(template, user_text, attachments=attachments))
        return parse_feedback(response.text, script.path_index)

    def synthesize(
        self,
        query: str,
        dataset: str,
        pairs: list[tuple[CandidateScript, FeedbackReport | None]],
    ) -> CandidateScript:
        """Fan in: one editor call over all candidates (and reviews, if any)."""
        if not pairs:
            raise ValueError("synthesize needs at least one candidate")
        with_feedback = any(fb is not None for _, fb in pairs)
        template = self.prompts["syn" if with_feedback else "syn_nofb"]
        bundle = format_feedback_bundle(pairs)
        user_text = template.render(query=query, dataset=dataset, feedback_bundle=bundle)
        source = self._complete_code(template, user_text, None)
        return CandidateScript(path_index=0, source=source, origin=Origin.SYNTHESIZED)

    def zero_shot_generate(self, query: str, dataset: str) -> CandidateScript:
        """Baseline: direct query-to-code, no intermediate reasoning."""
        return self._baseline("zero_shot", Origin.ZERO_SHOT, query, dataset)

    def cot_generate(self, query: str, dataset: str) -> CandidateScript:
        """Baseline: explicit step-by-step reasoning before the code block."""
        return self._baseline("cot", Origin.COT, query, dataset)

    def _baseline(self, stem: str, origin: Origin, query: str, dataset: str) -> CandidateScript:
        template = self.prompts[stem]
        user_text = template.render(query=query, dataset=dataset)
        source = self._complete_code(template, user_text, None)
        return CandidateScript(path_index=1, source=source, origin=origin)

    def _complete_code(self, template: PromptTemplate, user_text: str, temperature: float | None) -> str:
        for text in (user_text, user_text + "\n\n" + REPROMPT_CODE):
            request = self._request(template, text)
            if temperature is not None:
                request = ChatRequest(request.role_tag, request.messages, temperature, request.model_id)
            response = self.gateway.complete(request)
            try:
                return extract_code(response.text)
            except CodeAbsentError:
                continue
        raise EmptyCodeError(f"no code block in {template.role_tag.value} response (after reprompt)")


_FEEDBACK_SECTIONS = {
    "semantic_alignment": re.compile(r"semantic\s+alignment\s*:\s*(.+?)(?=\n\s*(?:data\s+correctness|visual\s+quality|verdict)\s*:|\Z)", re.IGNORECASE | re.DOTALL),
    "data_correctness": re.compile(r"data\s+correctness\s*:\s*(.+?)(?=\n\s*(?:semantic\s+alignment|visual\s+quality|verdict)\s*:|\Z)", re.IGNORECASE | re.DOTALL),
    "visual_quality": re.compile(r"visual\s+quality\s*:\s*(.+?)(?=\n\s*(?:semantic\s+alignment|data\s+correctness|verdict)\s*:|\Z)", re.IGNORECASE | re.DOTALL),
}
_VERDICT_RE = re.compile(r"verdict\s*:\s*\**\s*(usable|fixable|discard)", re.IGNORECASE)


def parse_feedback(text: str, path_index: int) -> FeedbackReport:
    """Structure a reviewer reply; falls back to section-less copies."""
    fields: dict[str, str] = {}
    for name, pattern in _FEEDBACK_SECTIONS.items():
        m = pattern.search(text)
        fields[name] = m.group(1).strip() if m and m.group(1).strip() else text.strip()
    m = _VERDICT_RE.search(text)
    verdict = Verdict(m.group(1).lower()) if m else Verdict.FIXABLE
    return FeedbackReport(
        path_index=path_index,
        semantic_alignment=fields["semantic_alignment"],
        data_correctness=fields["data_correctness"],
        visual_quality=fields["visual_quality"],
        verdict=verdict,
        raw_text=text,
    )


def format_feedback_bundle(pairs: list[tuple[CandidateScript, FeedbackReport | None]]) -> str:
    """Lay out every candidate (and review, when present) for the editor.

    Candidates appear in path-index order so branch scheduling never
    changes the synthesis prompt.
    """
    parts: list[str] = []
    for n, (candidate, report) in enumerate(pairs, start=1):
        parts.append(f"CANDIDATE {n}:\n```python\n{candidate.source}\n```")
        if report is not None:
            parts.append(
                f"REVIEW OF CANDIDATE {n}:\n"
                f"Semantic alignment: {report.semantic_alignment}\n"
                f"Data correctness: {report.data_correctness}\n"
                f"Visual quality: {report.visual_quality}\n"
                f"Verdict: {report.verdict.value}"
            )
    return "\n\n".join(parts)
