"""Multi-path visualization code generation engine.

Turns an underspecified plotting request plus a dataset description into
one optimized executable script: fan out K alternative reasoning paths,
generate a candidate script per path, execute every candidate in a
sandbox, collect structured visual or error feedback, and synthesize the
final program. Ships with a benchmark harness measuring plot score,
executable rate, and per-stage call counts.
"""

from .core import (
    CandidateScript,
    ExecutionOutcome,
    FeedbackReport,
    Mode,
    Origin,
    PipelineConfig,
    ReasoningPath,
    RunRecord,
    StageLedger,
    TaskInput,
    Verdict,
    ledger_total,
    load_run,
    persist_run,
    record_digest,
    structurally_equal,
    validate_config,
)
from .gateway import (
    Cassette,
    ChatRequest,
    ChatResponse,
    Gateway,
    LiveBackend,
    Message,
    RecordBackend,
    ReplayBackend,
    RoleTag,
    ScriptedBackend,
    fingerprint,
)
from .agents import Agents, PromptLibrary, PromptTemplate, extract_code
from .executor import (
    RawResult,
    SandboxJob,
    SubprocessTransport,
    execute,
    truncate_error,
)
from .pipeline import Pipeline
from .bench import (
    BenchItem,
    Scorecard,
    desk_suite_path,
    executable_rate,
    k_sweep,
    load_suite,
    run_suite,
    score_plot,
)

__version__ = "0.1.0"

__all__ = [
    "Agents",
    "BenchItem",
    "CandidateScript",
    "Cassette",
    "ChatRequest",
    "ChatResponse",
    "ExecutionOutcome",
    "FeedbackReport",
    "Gateway",
    "LiveBackend",
    "Message",
    "Mode",
    "Origin",
    "Pipeline",
    "PipelineConfig",
    "PromptLibrary",
    "PromptTemplate",
    "RawResult",
    "ReasoningPath",
    "RecordBackend",
    "ReplayBackend",
    "RoleTag",
    "RunRecord",
    "SandboxJob",
    "Scorecard",
    "ScriptedBackend",
    "StageLedger",
    "SubprocessTransport",
    "TaskInput",
    "Verdict",
    "desk_suite_path",
    "executable_rate",
    "execute",
    "extract_code",
    "fingerprint",
    "k_sweep",
    "ledger_total",
    "load_run",
    "load_suite",
    "persist_run",
    "record_digest",
    "run_suite",
    "score_plot",
    "structurally_equal",
    "truncate_error",
    "validate_config",
    "__version__",
]
