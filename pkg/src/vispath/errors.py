"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class VisPathError(Exception):
    """Base class for all engine errors."""


class ConfigError(VisPathError):
    """Raised when a configuration fails validation.

    ``violations`` lists one human-readable message per offending field.
    """

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


class GatewayError(VisPathError):
    """Base class for chat-gateway failures."""


class ProviderError(GatewayError):
    """Live provider failed after the bounded retries."""


class CassetteMissError(GatewayError):
    """Replay backend has no entry for the request fingerprint."""


class NoRuleError(GatewayError):
    """Scripted backend has no rule matching the request."""


class ParseFailureError(VisPathError):
    """Agent output could not be parsed even after one reprompt."""


class EmptyCodeError(VisPathError):
    """No code block could be extracted even after one reprompt."""


class CodeAbsentError(VisPathError):
    """Signal from the code extractor: the text contains no code."""


class TransportUnavailableError(VisPathError):
    """The sandbox runner binary is missing or cannot be launched."""


class TransportTimeoutError(VisPathError):
    """Internal signal: the sandbox job exceeded its time limit."""


class StorageUnavailableError(VisPathError):
    """The run-record store cannot be written."""


class CorruptRecordError(VisPathError):
    """A persisted run record failed its integrity check."""


class SuiteFormatError(VisPathError):
    """A benchmark suite file is malformed."""


class ScoringFailureError(VisPathError):
    """The judge response could not be turned into a valid score."""


class PipelineFatalError(VisPathError):
    """A fan-out or fan-in stage hard-failed; a partial record was kept.

    ``record_path`` points at the persisted partial record when one exists.
    """

    def __init__(self, message: str, record_path=None):
        self.record_path = record_path
        super().__init__(message)
