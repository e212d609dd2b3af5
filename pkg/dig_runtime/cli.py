"""
Command-line interface

    run       generate a task, execute it and write the trace
    replay    rebuild the graph from a trace
    diagnose  run every detector over a trace
    bench     execute an experiment matrix

Exit codes: 0 success, 1 run failure, 2 usage error.
`run`, `replay` and `diagnose` accept `--config FILE`, a flat key = value
file whose keys are flag names; explicit flags win over file values.
"""
import argparse
import json
import sys
from typing import Any, Dict, List, Optional

from dotenv import dotenv_values

from dig_runtime.commands import handle_bench, handle_diagnose, handle_replay, handle_run
from dig_runtime.exceptions import ConfigError
from dig_runtime.schemas import CommandResult
from dig_runtime.utils.logging import get_logger, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _add_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, help="Flat key = value file with flag defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dig",
        description="Multi-agent runtime with interaction-graph failure detection and healing",
    )
    parser.add_argument("--log-level", type=str, default=None, help="Overrides DIG_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    run_parser = subparsers.add_parser("run", help="Run one task and record its trace")
    _add_config(run_parser)
    run_parser.add_argument("--task", type=str, help="count-frequency or categorical-frequency")
    run_parser.add_argument("--size", type=int, help="Number of items in the root problem")
    run_parser.add_argument("--agents", type=int, help="Number of agents (a1..aN)")
    run_parser.add_argument("--seed", type=int, help="Master seed")
    run_parser.add_argument("--mode", type=str, help="det or conc")
    run_parser.add_argument("--heal", type=str, help="on or off")
    run_parser.add_argument(
        "--policies", type=str,
        help="Policy assignment, e.g. honest,a2=premature-submitter,a3=twin-splitter:half=1",
    )
    run_parser.add_argument("--trace", type=str, help="Trace output path (JSONL)")
    run_parser.add_argument("--dot", type=str, help="Write the full graph as DOT")
    run_parser.add_argument("--dot-clean", type=str, help="Write the graph without non-productive edges")
    run_parser.add_argument("--timeline", type=str, help="Write the activation timeline as CSV")
    run_parser.add_argument("--blobs", type=str, help="Directory for payload body sidecar files")

    replay_parser = subparsers.add_parser("replay", help="Rebuild the graph from a trace")
    _add_config(replay_parser)
    replay_parser.add_argument("--trace", type=str, help="Trace path")
    replay_parser.add_argument("--dot", type=str, help="Write the full graph as DOT")
    replay_parser.add_argument("--dot-clean", type=str, help="Write the graph without non-productive edges")
    replay_parser.add_argument("--timeline", type=str, help="Write the activation timeline as CSV")
    replay_parser.add_argument("--fingerprint", action="store_true", default=None, help="Print the graph digest")

    diagnose_parser = subparsers.add_parser("diagnose", help="Detect failures in a recorded trace")
    _add_config(diagnose_parser)
    diagnose_parser.add_argument("--trace", type=str, help="Trace path")
    diagnose_parser.add_argument("--mc-window", type=int, help="Missing-completion window (ticks)")
    diagnose_parser.add_argument("--oe-window", type=int, help="Orphaned-event window (ticks)")
    diagnose_parser.add_argument("--dl-window", type=int, help="Deadlock window (ticks)")
    diagnose_parser.add_argument("--er-max", type=int, help="Reroute count that flags excessive rerouting")

    bench_parser = subparsers.add_parser("bench", help="Run an experiment matrix")
    bench_parser.add_argument("--config", type=str, help="Matrix YAML file")
    bench_parser.add_argument("--out", type=str, help="Results JSONL path")

    return parser


RUN_DEFAULTS: Dict[str, Any] = {
    "task": "count-frequency",
    "size": 1000,
    "agents": 3,
    "seed": 0,
    "mode": "det",
    "heal": "off",
    "policies": "honest",
}


def load_flag_file(path: str) -> Dict[str, Any]:
    """key = value pairs; keys use flag spelling with dashes or underscores"""
    try:
        raw = dotenv_values(path)
    except OSError as e:
        raise UsageError(f"Cannot read config {path}: {e}")
    return {key.strip().lstrip("-").replace("-", "_"): value for key, value in raw.items() if value is not None}


def merge_options(args: argparse.Namespace, defaults: Dict[str, Any]) -> Dict[str, Any]:
    """Flag values override file values, which override built-in defaults"""
    merged = dict(defaults)
    if getattr(args, "config", None):
        merged.update(load_flag_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config", "log_level"):
            continue
        if value is not None:
            merged[key] = value
    return merged


def _require(options: Dict[str, Any], *keys: str) -> None:
    missing = [k for k in keys if not options.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _as_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def dispatch(args: argparse.Namespace) -> CommandResult:
    if args.command == "run":
        options = merge_options(args, RUN_DEFAULTS)
        _require(options, "trace")
        return handle_run(
            task=options["task"],
            size=options["size"],
            agents=options["agents"],
            seed=options["seed"],
            mode=options["mode"],
            heal=options["heal"],
            policies=options["policies"],
            trace=options["trace"],
            dot=options.get("dot"),
            dot_clean=options.get("dot_clean"),
            timeline=options.get("timeline"),
            blobs=options.get("blobs"),
        )

    if args.command == "replay":
        options = merge_options(args, {})
        _require(options, "trace")
        return handle_replay(
            trace=options["trace"],
            dot=options.get("dot"),
            dot_clean=options.get("dot_clean"),
            fingerprint=_as_bool(options.get("fingerprint", False)),
            timeline=options.get("timeline"),
        )

    if args.command == "diagnose":
        options = merge_options(args, {})
        _require(options, "trace")
        return handle_diagnose(
            trace=options["trace"],
            mc_window=options.get("mc_window"),
            oe_window=options.get("oe_window"),
            dl_window=options.get("dl_window"),
            er_max=options.get("er_max"),
        )

    if args.command == "bench":
        if not args.config or not args.out:
            raise UsageError("bench needs --config and --out")
        return handle_bench(config=args.config, out=args.out)

    raise UsageError("a command is required: run, replay, diagnose or bench")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    setup_logging(args.log_level)

    try:
        result = dispatch(args)
    except (UsageError, ValueError, ConfigError) as e:
        print(f"dig: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    if result.text is not None:
        sys.stdout.write(result.text)
    elif result.data is not None:
        print(json.dumps(result.data, indent=2))
    if not result.success:
        print(f"dig: {result.error}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
