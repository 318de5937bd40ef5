"""Uniform chat-completion access for every agent role.

One gateway serves all roles; per-role model ids come from the pipeline
configuration. Four interchangeable backends:

* scripted — rule table, fully offline, for tests and demos
* replay   — deterministic playback of a recorded cassette
* record   — wraps another backend and writes a cassette as it goes
* live     — OpenAI-compatible chat-completions provider over HTTP

Every completed call is appended to an in-memory transcript; for a clean
run the transcript length equals the run's ledger total.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

from .errors import CassetteMissError, NoRuleError, ProviderError

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BACKOFF_BASE_SECONDS = 0.5


class RoleTag(str, Enum):
    MPA = "mpa"  # multi-path planner
    CODE = "code"  # code generation
    FB = "fb"  # visual feedback
    SYN = "syn"  # synthesis
    JUDGE = "judge"  # benchmark scoring
    BASELINE = "baseline"  # zero-shot / CoT comparison strategies


#: Roles allowed to carry image attachments.
VISION_ROLES = (RoleTag.FB, RoleTag.JUDGE)


@dataclass(frozen=True)
class Message:
    speaker: str  # "system" | "user"
    text: str
    attachments: tuple[bytes, ...] = ()  # PNG payloads

    def __post_init__(self):
        if self.speaker not in ("system", "user"):
            raise ValueError(f"unknown speaker {self.speaker!r}")
        object.__setattr__(self, "attachments", tuple(self.attachments))


@dataclass(frozen=True)
class ChatRequest:
    role_tag: RoleTag
    messages: tuple[Message, ...]
    temperature: float
    model_id: str

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages or self.messages[0].speaker != "system":
            raise ValueError("first message must be the role's system prompt")
        if self.role_tag not in VISION_ROLES:
            if any(m.attachments for m in self.messages):
                raise ValueError(f"image attachments not allowed for role {self.role_tag.value}")

    @property
    def last_user_text(self) -> str:
        for message in reversed(self.messages):
            if message.speaker == "user":
                return message.text
        return ""

    @property
    def attachment_count(self) -> int:
        return sum(len(m.attachments) for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: tuple[int, int] = (0, 0)  # (prompt_tokens, completion_tokens)
    latency_ms: int = 0


def fingerprint(request: ChatRequest) -> str:
    """Deterministic digest of a normalized request.

    Latency and timestamps never enter the digest; attachments hash in
    message order. Any change to role, model, temperature, text, or a
    single attachment byte yields a different digest.
    """
    normalized = {
        "role_tag": request.role_tag.value,
        "model_id": request.model_id,
        "temperature": request.temperature,
        "messages": [
            {
                "speaker": m.speaker,
                "text": m.text,
                "attachments": [hashlib.sha256(a).hexdigest() for a in m.attachments],
            }
            for m in request.messages
        ],
    }
    blob = json.dumps(normalized, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TranscriptEntry:
    """One gateway exchange, kept in memory for auditing and tests."""

    exchange_id: int
    role_tag: RoleTag
    fingerprint: str
    request: ChatRequest
    response: ChatResponse
    attempts: int


class Backend(Protocol):
    def send(self, request: ChatRequest) -> tuple[ChatResponse, int]:
        """Return (response, attempts used)."""


# ---------------------------------------------------------------------------
# Scripted backend


Responder = str | Callable[[ChatRequest], str]


class ScriptedBackend:
    """Rule table: (role_tag, regex over the last user message) -> response.

    First matching rule wins. Responders may be plain strings or callables,
    which lets tests inject per-stage and per-call behavior without
    replicating prompt text.
    """

    def __init__(self):
        self._rules: list[tuple[RoleTag, re.Pattern[str], Responder]] = []
        self._lock = threading.Lock()  # responders may carry per-call state

    def add_rule(self, role_tag: RoleTag, pattern: str, responder: Responder) -> "ScriptedBackend":
        self._rules.append((role_tag, re.compile(pattern, re.DOTALL), responder))
        return self

    def send(self, request: ChatRequest) -> tuple[ChatResponse, int]:
        for role_tag, pattern, responder in self._rules:
            if role_tag is request.role_tag and pattern.search(request.last_user_text):
                if callable(responder):
                    with self._lock:
                        text = responder(request)
                else:
                    text = responder
                usage = (len(request.last_user_text) // 4, len(text) // 4)
                return ChatResponse(text=text, usage=usage, latency_ms=0), 1
        raise NoRuleError(
            f"no scripted rule for role={request.role_tag.value!r}, "
            f"message head: {request.last_user_text[:120]!r}"
        )


# ---------------------------------------------------------------------------
# Cassettes: record / replay


@dataclass
class Cassette:
    """Ordered fingerprint -> response map; normalization excludes latency."""

    entries: dict[str, dict] = field(default_factory=dict)  # insertion-ordered

    def put(self, fp: str, role_tag: RoleTag, response: ChatResponse) -> None:
        if fp in self.entries:
            return  # identical request already recorded; first response wins
        self.entries[fp] = {
            "fingerprint": fp,
            "role_tag": role_tag.value,
            "response_text": response.text,
            "usage": list(response.usage),
        }

    def get(self, fp: str) -> ChatResponse | None:
        entry = self.entries.get(fp)
        if entry is None:
            return None
        return ChatResponse(text=entry["response_text"], usage=tuple(entry["usage"]), latency_ms=0)

    def dump(self, path: Path) -> None:
        lines = [json.dumps(e, sort_keys=True, ensure_ascii=False) for e in self.entries.values()]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Cassette":
        cassette = cls()
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptCassette(f"{path}:{lineno}: {exc}") from exc
            fp = entry["fingerprint"]
            if fp in cassette.entries:
                raise CorruptCassette(f"{path}:{lineno}: duplicate fingerprint {fp}")
            cassette.entries[fp] = entry
        return cassette


class CorruptCassette(CassetteMissError):
    """Cassette file is malformed (also a replay failure)."""


class ReplayBackend:
    """Read-only playback; a missing fingerprint is a cassette miss."""

    def __init__(self, cassette: Cassette):
        self._cassette = cassette

    @classmethod
    def from_file(cls, path: Path) -> "ReplayBackend":
        return cls(Cassette.load(path))

    def send(self, request: ChatRequest) -> tuple[ChatResponse, int]:
        response = self._cassette.get(fingerprint(request))
        if response is None:
            raise CassetteMissError(
                f"no cassette entry for role={request.role_tag.value!r} "
                f"fingerprint={fingerprint(request)[:12]}..."
            )
        return response, 1


class RecordBackend:
    """Pass-through backend that appends every exchange to a cassette.

    Only fingerprints, role tags, response text, and usage are written:
    credentials and raw prompts never reach the file.
    """

    def __init__(self, inner: Backend, cassette_path: Path):
        self._inner = inner
        self._path = Path(cassette_path)
        self._cassette = Cassette.load(self._path) if self._path.exists() else Cassette()
        self._lock = threading.Lock()

    def send(self, request: ChatRequest) -> tuple[ChatResponse, int]:
        response, attempts = self._inner.send(request)
        with self._lock:
            self._cassette.put(fingerprint(request), request.role_tag, response)
            self._cassette.dump(self._path)
        return response, attempts


# ---------------------------------------------------------------------------
# Live backend (OpenAI-compatible chat completions)

API_KEY_ENV = "VISPATH_API_KEY"
API_KEY_FALLBACK_ENV = "OPENAI_API_KEY"
BASE_URL_ENV = "VISPATH_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"


def _wire_messages(request: ChatRequest) -> list[dict]:
    """Messages in provider wire format; attachments as base64 data URIs."""
    wire: list[dict] = []
    for m in request.messages:
        if not m.attachments:
            wire.append({"role": m.speaker, "content": m.text})
            continue
        parts: list[dict] = [{"type": "text", "text": m.text}]
        for payload in m.attachments:
            b64 = base64.b64encode(payload).decode("ascii")
            parts.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}})
        wire.append({"role": m.speaker, "content": parts})
    return wire


class LiveBackend:
    """Bounded-retry HTTP client for any OpenAI-compatible provider.

    ``post`` and ``sleep`` are injectable for tests; by default an httpx
    client posts to ``{base_url}/chat/completions`` with a bearer token
    taken from the environment.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        max_attempts: int = MAX_ATTEMPTS,
        post: Callable[[str, dict, dict], tuple[int, str]] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self._api_key = api_key or os.environ.get(API_KEY_ENV) or os.environ.get(API_KEY_FALLBACK_ENV)
        self.max_attempts = max_attempts
        self._post = post or self._httpx_post
        self._sleep = sleep

    def _httpx_post(self, url: str, headers: dict, body: dict) -> tuple[int, str]:
        import httpx

        response = httpx.post(url, headers=headers, json=body, timeout=120.0)
        return response.status_code, response.text

    def send(self, request: ChatRequest) -> tuple[ChatResponse, int]:
        if not self._api_key:
            raise ProviderError(f"no API key: set {API_KEY_ENV} or {API_KEY_FALLBACK_ENV}")
        url = f"{self.base_url}/chat/completions"
        headers = {"Authorization": f"Bearer {self._api_key}"}
        body = {
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": _wire_messages(request),
        }

        last_error = "unknown"
        for attempt in range(1, self.max_attempts + 1):
            t0 = time.monotonic()
            try:
                status, text = self._post(url, headers, body)
            except Exception as exc:  # transport-level failure
                last_error = f"transport error: {exc}"
                status, text = None, ""
            latency_ms = int((time.monotonic() - t0) * 1000)

            if status is not None:
                if status == 200:
                    response = self._parse_success(text, latency_ms)
                    if response is not None:
                        return response, attempt
                    last_error = f"malformed provider payload: {text[:200]}"
                elif status == 429 or status >= 500:
                    last_error = f"HTTP {status}: {text[:200]}"
                else:
                    raise ProviderError(f"HTTP {status}: {text[:500]}")

            if attempt < self.max_attempts:
                delay = BACKOFF_BASE_SECONDS * (2 ** (attempt - 1))
                logger.warning("provider attempt %d/%d failed (%s); backing off %.1fs",
                               attempt, self.max_attempts, last_error, delay)
                self._sleep(delay)

        raise ProviderError(f"provider failed after {self.max_attempts} attempts: {last_error}")

    @staticmethod
    def _parse_success(text: str, latency_ms: int) -> ChatResponse | None:
        try:
            data = json.loads(text)
            content = data["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError):
            return None
        if not isinstance(content, str) or not content:
            return None
        usage = data.get("usage", {})
        return ChatResponse(
            text=content,
            usage=(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)),
            latency_ms=latency_ms,
        )


# ---------------------------------------------------------------------------
# Gateway


class Gateway:
    """Thread-safe front door: complete() + append-only transcript."""

    def __init__(self, backend: Backend):
        self.backend = backend
        self.transcript: list[TranscriptEntry] = []
        self._lock = threading.Lock()
        self._next_id = 1

    def complete(self, request: ChatRequest) -> ChatResponse:
        response, attempts = self.backend.send(request)
        with self._lock:
            entry = TranscriptEntry(
                exchange_id=self._next_id,
                role_tag=request.role_tag,
                fingerprint=fingerprint(request),
                request=request,
                response=response,
                attempts=attempts,
            )
            self._next_id += 1
            self.transcript.append(entry)
        return response

    def transcript_mark(self) -> int:
        """Current transcript length; slice from here to scope a run."""
        with self._lock:
            return len(self.transcript)

    def entries_since(self, mark: int) -> list[TranscriptEntry]:
        with self._lock:
            return list(self.transcript[mark:])
