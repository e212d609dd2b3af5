"""
Run Command Handler
Generates a task, runs it to completion with a trace file, and summarizes.
"""
import time
from pathlib import Path
from typing import Optional

from bench.scenarios import agent_names
from bench.tasks import evaluate, generate_task
from dig_runtime.config import get_settings
from dig_runtime.exceptions import ConfigError, DigError
from dig_runtime.scheduler import init_run, run_to_completion
from dig_runtime.schemas import CommandResult, RunConfig, RunStatus, ThresholdSet
from dig_runtime.utils.logging import get_logger
from dig_runtime.utils.validation import InputValidator
from graph.dot_export import save_dot
from graph.interaction_graph import fingerprint
from graph.timeline import save_timeline
from tracing.records import TraceWriter

logger = get_logger(__name__)


def build_run_config(
    agents: int,
    seed: int,
    mode: str,
    heal,
    policies: Optional[str],
) -> RunConfig:
    settings = get_settings()
    agents = InputValidator.validate_positive_int(agents, "agents")
    names = agent_names(agents)
    return RunConfig(
        agents=InputValidator.parse_policies(policies, names),
        initial_recipients=names[:1],
        seed=InputValidator.validate_seed(seed),
        mode=InputValidator.validate_mode(mode),
        healing=InputValidator.validate_switch(heal, "heal"),
        thresholds=ThresholdSet(
            mc_window=settings.mc_window,
            oe_window=settings.oe_window,
            dl_window=settings.dl_window,
            er_max_reroutes=settings.er_max_reroutes,
        ),
        max_ticks=settings.max_ticks,
        max_wall_seconds=settings.max_wall_seconds,
        idle_limit=settings.idle_limit,
        fanout=settings.fanout,
    )


def handle_run(
    task: str,
    size: int,
    agents: int,
    seed: int,
    mode: str,
    heal,
    policies: Optional[str],
    trace: str,
    dot: Optional[str] = None,
    dot_clean: Optional[str] = None,
    timeline: Optional[str] = None,
    blobs: Optional[str] = None,
) -> CommandResult:
    """
    Handle the run subcommand

    Validation problems raise ValueError (usage error); failures inside the
    run come back as an unsuccessful CommandResult.
    """
    start_time = time.time()
    size = InputValidator.validate_positive_int(size, "size")
    config = build_run_config(agents, seed, mode, heal, policies)
    instance = generate_task(task, size, config.seed)

    logger.info(
        "run_request",
        task=instance.domain,
        size=size,
        agents=len(config.agents),
        seed=config.seed,
        mode=config.mode.value,
        healing=config.healing,
    )

    try:
        with TraceWriter(trace, blob_dir=blobs) as sink:
            state = init_run(config, instance.payload, sink=sink)
            result = run_to_completion(state)
    except ConfigError:
        raise
    except DigError as e:
        logger.error("run_failed", error=str(e))
        return CommandResult(success=False, error=f"{type(e).__name__}: {e}",
                             latency_ms=(time.time() - start_time) * 1000)

    if dot:
        save_dot(state.graph, dot)
    if dot_clean:
        save_dot(state.graph, dot_clean, clean=True)
    if timeline:
        save_timeline(state.graph, timeline)

    outcome = evaluate(result.final_event, instance)
    data = {
        "status": result.status.value,
        "ticks": result.metrics.ticks,
        "activations": result.metrics.activations,
        "events": result.metrics.events,
        "interventions": result.metrics.interventions,
        "signals": result.signal_counts(),
        "rmse": outcome["rmse"],
        "valid_output": outcome["valid_output"],
        "fingerprint": fingerprint(state.graph),
        "graph": state.graph.stats(),
        "trace": str(Path(trace)),
    }
    success = result.status == RunStatus.TERMINAL
    return CommandResult(
        success=success,
        data=data,
        error=None if success else f"run ended with status {result.status.value}",
        latency_ms=(time.time() - start_time) * 1000,
    )
