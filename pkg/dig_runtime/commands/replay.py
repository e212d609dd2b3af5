"""
Replay Command Handler
"""
import time
from typing import Optional

from dig_runtime.exceptions import DigError
from dig_runtime.schemas import CommandResult
from dig_runtime.utils.logging import get_logger
from graph.dot_export import save_dot
from graph.interaction_graph import fingerprint as graph_fingerprint
from graph.timeline import save_timeline
from tracing.replay import replay

logger = get_logger(__name__)


def handle_replay(
    trace: str,
    dot: Optional[str] = None,
    dot_clean: Optional[str] = None,
    fingerprint: bool = False,
    timeline: Optional[str] = None,
) -> CommandResult:
    start_time = time.time()
    try:
        graph = replay(trace)
    except (DigError, OSError) as e:
        logger.error("replay_failed", trace=trace, error=str(e))
        return CommandResult(success=False, error=f"{type(e).__name__}: {e}")

    if dot:
        save_dot(graph, dot)
    if dot_clean:
        save_dot(graph, dot_clean, clean=True)
    if timeline:
        save_timeline(graph, timeline)

    data = {"trace": trace, "graph": graph.stats()}
    if fingerprint:
        data["fingerprint"] = graph_fingerprint(graph)
    return CommandResult(success=True, data=data, latency_ms=(time.time() - start_time) * 1000)
