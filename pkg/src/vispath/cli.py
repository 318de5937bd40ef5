"""Command-line entry point.

Human-readable output goes to stderr; machine artifacts (records, figures,
scorecards, cassettes) go to files, so the CLI composes in shell scripts.
Exit codes: 0 success, 1 run failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import shlex
import shutil
import sys
from pathlib import Path

from . import bench
from .core import Mode, PipelineConfig, ledger_total, validate_config
from .demo import StubTransport, demo_rules
from .errors import ConfigError, PipelineFatalError, VisPathError
from .gateway import Gateway, LiveBackend, RecordBackend, ReplayBackend
from .executor import DEFAULT_RUNNER_COMMAND, SubprocessTransport
from .pipeline import Pipeline

BACKENDS = ("live", "record", "replay", "scripted")
TRANSPORTS = ("runner", "stub")

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG = 2


def say(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# Configuration assembly: flags > config file > built-in defaults


PIPELINE_KEYS = {f.name for f in dataclasses.fields(PipelineConfig)}
CLI_KEYS = {"backend", "cassette", "out", "transport", "runner_cmd"}


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file is not valid JSON: {exc}"])
    unknown = set(data) - PIPELINE_KEYS - CLI_KEYS
    if unknown:
        raise ConfigError([f"unknown config keys: {sorted(unknown)}"])
    return data


def assemble(args: argparse.Namespace) -> tuple[PipelineConfig, dict]:
    """Merge flags over the config file over defaults."""
    file_cfg = load_config_file(getattr(args, "config", None))

    pipeline_kwargs = {k: v for k, v in file_cfg.items() if k in PIPELINE_KEYS}
    if "mode" in pipeline_kwargs:
        pipeline_kwargs["mode"] = Mode(pipeline_kwargs["mode"])
    for flag, key in (("k", "k"), ("mode", "mode"), ("timeout", "exec_timeout")):
        value = getattr(args, flag, None)
        if value is not None:
            pipeline_kwargs[key] = Mode(value) if key == "mode" else value
    config = PipelineConfig(**pipeline_kwargs)
    violations = validate_config(config)
    if violations:
        raise ConfigError(violations)

    runtime = {
        "backend": getattr(args, "backend", None) or file_cfg.get("backend") or "scripted",
        "cassette": getattr(args, "cassette", None) or file_cfg.get("cassette"),
        "out": getattr(args, "out", None) or file_cfg.get("out") or "runs",
        "transport": getattr(args, "transport", None) or file_cfg.get("transport"),
        "runner_cmd": getattr(args, "runner_cmd", None) or file_cfg.get("runner_cmd"),
    }
    if runtime["transport"] is None:
        runtime["transport"] = "stub" if runtime["backend"] == "scripted" else "runner"
    return config, runtime


def build_gateway(runtime: dict) -> Gateway:
    backend_name = runtime["backend"]
    cassette = runtime["cassette"]
    if backend_name == "scripted":
        return Gateway(demo_rules())
    if backend_name == "replay":
        if not cassette or not Path(cassette).is_file():
            raise ConfigError([f"replay backend requires an existing cassette (got {cassette!r})"])
        return Gateway(ReplayBackend.from_file(Path(cassette)))
    if backend_name == "record":
        if not cassette:
            raise ConfigError(["record backend requires --cassette to write to"])
        return Gateway(RecordBackend(LiveBackend(), Path(cassette)))
    if backend_name == "live":
        return Gateway(LiveBackend())
    raise ConfigError([f"unknown backend {backend_name!r}"])


def build_transport(runtime: dict):
    if runtime["transport"] == "stub":
        return StubTransport()
    command = tuple(shlex.split(runtime["runner_cmd"])) if runtime["runner_cmd"] else DEFAULT_RUNNER_COMMAND
    if shutil.which(command[0]) is None:
        raise ConfigError(
            [f"sandbox runner {command[0]!r} not found on PATH; install it or pass --transport stub"]
        )
    return SubprocessTransport(command=command)


def announce(config: PipelineConfig, runtime: dict, verbose: bool) -> None:
    if not verbose:
        return
    say("effective configuration:")
    for key, value in {**config.to_dict(), **runtime}.items():
        say(f"  {key} = {value!r}")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_run(args: argparse.Namespace) -> int:
    from .core import TaskInput

    config, runtime = assemble(args)
    announce(config, runtime, args.verbose)
    gateway = build_gateway(runtime)
    transport = build_transport(runtime)

    data_files = []
    for spec in args.data or []:
        name, _, path = spec.rpartition("=")
        path = path or spec
        data_files.append((name or Path(path).name, path))

    task = TaskInput(
        task_id=args.task_id,
        query=args.query,
        dataset_description=args.dataset_desc,
        data_files=tuple(data_files),
    )
    out_root = Path(runtime["out"])
    pipeline = Pipeline(gateway, transport, config, out_root)
    try:
        record = pipeline.run(task)
    except PipelineFatalError as exc:
        say(f"run failed: {exc}")
        if exc.record_path:
            say(f"partial record: {exc.record_path}")
        return EXIT_RUN_FAILURE

    store = out_root / task.task_id
    final_path = store / "final.py"
    final_path.write_text(record.final.source + "\n", encoding="utf-8")

    outcome = record.final_outcome
    say(f"final script: {final_path}")
    if outcome.ok:
        say(f"final outcome: ok ({len(outcome.figures)} figure(s), {outcome.wall_time_ms} ms)")
        for ref in outcome.figures:
            say(f"  figure: {store / ref}")
    else:
        flavor = "timed out" if outcome.timed_out else "failed"
        say(f"final outcome: {flavor}")
        say(f"  error tail: {outcome.error_text[-300:]}")
    ledger = record.ledger
    say(
        "ledger: query_expansion=%d code_generation=%d visual_feedback=%d editor=%d total=%d"
        % (ledger.query_expansion, ledger.code_generation, ledger.visual_feedback,
           ledger.editor, ledger_total(ledger))
    )
    say(f"record: {store / 'record.json'}")
    return EXIT_OK if outcome.ok else EXIT_RUN_FAILURE


def cmd_bench(args: argparse.Namespace) -> int:
    config, runtime = assemble(args)
    if args.strategy:
        config = dataclasses.replace(config, mode=Mode(args.strategy))
    announce(config, runtime, args.verbose)
    gateway = build_gateway(runtime)
    transport = build_transport(runtime)

    suite_path = Path(args.suite) if args.suite else bench.desk_suite_path()
    suite = bench.load_suite(suite_path)
    out_dir = Path(runtime["out"])
    card = bench.run_suite(
        suite, config, gateway, transport, out_dir,
        resume=args.resume, correctness=args.correctness,
    )
    mean = card.mean_plot_score
    say(f"strategy: {card.strategy}")
    say(f"items: {len(card.items)} ({card.resumed_count} resumed)")
    say(f"executable rate: {card.executable_rate:.1f}%")
    say(f"mean plot score: {'n/a' if mean is None else f'{mean:.2f}'}")
    say(f"ledger totals: {card.ledger_totals.to_dict()} (total {ledger_total(card.ledger_totals)})")
    say(f"scorecard: {out_dir / 'scorecard.csv'}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config, runtime = assemble(args)
    announce(config, runtime, args.verbose)
    try:
        k_values = [int(v) for v in args.k_values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError([f"--k-values must be comma-separated integers (got {args.k_values!r})"])
    if not k_values:
        raise ConfigError(["--k-values is empty"])
    gateway = build_gateway(runtime)
    transport = build_transport(runtime)

    suite_path = Path(args.suite) if args.suite else bench.desk_suite_path()
    suite = bench.load_suite(suite_path)
    out_dir = Path(runtime["out"])
    try:
        results = bench.k_sweep(suite, k_values, config, gateway, transport, out_dir, resume=args.resume)
    except ValueError as exc:
        raise ConfigError([str(exc)])
    for k, card in results:
        mean = card.mean_plot_score
        say(f"k={k}: executable {card.executable_rate:.1f}%, "
            f"plot score {'n/a' if mean is None else f'{mean:.2f}'}")
    say(f"sweep table: {out_dir / 'sweep.csv'}")
    say(f"sweep chart: {out_dir / 'sweep.png'}")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    path = Path(args.record)
    if path.is_dir():
        path = path / "record.json"
    if not path.is_file():
        raise ConfigError([f"record not found: {path}"])
    document = json.loads(path.read_text(encoding="utf-8"))
    record = document.get("record", document)

    task = record["input"]
    config = record["config"]
    ledger = record["ledger"]
    say(f"task: {task['task_id']}")
    say(f"query: {task['query'][:100]}")
    say(f"mode: {config['mode']}  k: {config['k']}")
    say(f"paths: {len(record['paths'])}  candidates: {len(record['candidates'])}  "
        f"outcomes: {len(record['outcomes'])}  feedback: {len(record['feedback'])}")
    total = sum(ledger.values())
    say("ledger: " + "  ".join(f"{k}={v}" for k, v in ledger.items()) + f"  total={total}")
    say("stage timings (ms):")
    for stage, ms in record["stage_timings"].items():
        say(f"  {stage}: {ms}")
    final_outcome = record["final_outcome"]
    if record.get("failure"):
        say(f"FAILURE: {record['failure']}")
    elif final_outcome:
        status = "ok" if final_outcome["ok"] else ("timed out" if final_outcome["timed_out"] else "failed")
        say(f"final outcome: {status}")
        for ref in final_outcome["figures"]:
            say(f"  figure: {ref}")
    say(f"window: {record['started_at']} .. {record['finished_at']}")
    return EXIT_OK


def cmd_cassette(args: argparse.Namespace) -> int:
    path = Path(args.file)
    if not path.is_file():
        raise ConfigError([f"cassette not found: {path}"])
    by_role: dict[str, int] = {}
    count = 0
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        count += 1
        by_role[entry["role_tag"]] = by_role.get(entry["role_tag"], 0) + 1
        if args.verbose:
            say(f"  {entry['fingerprint'][:12]}  {entry['role_tag']:9s}  "
                f"{len(entry['response_text'])} chars")
    say(f"{count} entries in {path}")
    for role, n in sorted(by_role.items()):
        say(f"  {role}: {n}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--out", help="output directory (default: runs)")
    parser.add_argument("--backend", choices=BACKENDS, help="chat backend (default: scripted)")
    parser.add_argument("--cassette", help="cassette file for record/replay backends")
    parser.add_argument("--transport", choices=TRANSPORTS,
                        help="sandbox transport (default: stub for scripted backend, else runner)")
    parser.add_argument("--runner-cmd", help="sandbox runner command line")
    parser.add_argument("--verbose", action="store_true", help="chatty diagnostics on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vispath",
                                     description="Multi-path visualization code generation engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one query through the pipeline")
    p_run.add_argument("--query", required=True)
    p_run.add_argument("--dataset-desc", required=True, help="dataset description text")
    p_run.add_argument("--data", action="append", metavar="NAME=PATH",
                       help="data file (repeatable); bare PATH uses the file name")
    p_run.add_argument("--task-id", default="adhoc")
    p_run.add_argument("--k", type=int)
    p_run.add_argument("--mode", choices=[m.value for m in Mode])
    p_run.add_argument("--timeout", type=float, help="sandbox timeout in seconds")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run a suite and emit a scorecard")
    p_bench.add_argument("--suite", help="suite JSONL (default: bundled desk suite)")
    p_bench.add_argument("--strategy", choices=[m.value for m in Mode],
                         help="strategy to evaluate (default: config mode)")
    p_bench.add_argument("--k", type=int)
    p_bench.add_argument("--timeout", type=float)
    p_bench.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True,
                         help="reuse already-persisted item records")
    p_bench.add_argument("--correctness", action="store_true",
                         help="also ask the judge a yes/no correctness question (approximation)")
    _add_common(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_sweep = sub.add_parser("sweep", help="run the suite across several k values")
    p_sweep.add_argument("--suite", help="suite JSONL (default: bundled desk suite)")
    p_sweep.add_argument("--k-values", required=True, help="comma-separated, e.g. 2,3,4")
    p_sweep.add_argument("--timeout", type=float)
    p_sweep.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True)
    _add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_inspect = sub.add_parser("inspect", help="pretty-print a persisted run record")
    p_inspect.add_argument("record", help="record.json or its directory")
    p_inspect.add_argument("--verbose", action="store_true")
    p_inspect.set_defaults(func=cmd_inspect)

    p_cassette = sub.add_parser("cassette", help="cassette utilities")
    cassette_sub = p_cassette.add_subparsers(dest="cassette_command", required=True)
    p_ls = cassette_sub.add_parser("ls", help="summarize a cassette file")
    p_ls.add_argument("file")
    p_ls.add_argument("--verbose", action="store_true")
    p_ls.set_defaults(func=cmd_cassette)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        for violation in exc.violations:
            say(f"config error: {violation}")
        return EXIT_CONFIG
    except VisPathError as exc:
        say(f"error: {exc}")
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
