"""
Offline replay
Rebuilds the labeled interaction graph from trace records alone: no run
state, no policies, no payload bodies.
"""
from pathlib import Path
from typing import Iterable, List, Union

from dig_runtime.exceptions import TraceFormatError
from dig_runtime.schemas import RecordKind, TraceRecord
from dig_runtime.utils.logging import get_logger
from graph.interaction_graph import InteractionGraph
from tracing.records import read_trace

logger = get_logger(__name__)

TraceSource = Union[str, Path, Iterable[TraceRecord]]


def load_records(trace: TraceSource) -> List[TraceRecord]:
    if isinstance(trace, (str, Path)):
        return read_trace(trace)
    return list(trace)


def replay(trace: TraceSource, strict: bool = True) -> InteractionGraph:
    """Fold every record into a fresh graph; dangling references raise UnknownNodeError"""
    records = load_records(trace)
    graph = InteractionGraph(strict=strict)
    last_t = -1
    for i, record in enumerate(records):
        if i == 0 and record.kind != RecordKind.RUN_META:
            raise TraceFormatError("trace must start with run_meta", 1)
        if record.t <= last_t:
            raise TraceFormatError(f"tick {record.t} does not follow {last_t}", i + 1)
        graph.apply(record)
        last_t = record.t
    logger.debug("trace_replayed", records=len(records), **graph.stats())
    return graph
