"""
Trace Recorder
Every bookkeeping step becomes a trace record: written to the sink first,
then folded into the live graph with the same code replay uses.
"""
from typing import Any, Callable, Dict, Optional

from dig_runtime.core import LogicalClock
from dig_runtime.schemas import RecordKind, TraceRecord
from dig_runtime.utils.logging import get_logger
from graph.interaction_graph import InteractionGraph

logger = get_logger(__name__)


class TraceRecorder:
    """Writes lineage records and keeps the graph in step with the trace"""

    def __init__(
        self,
        graph: InteractionGraph,
        sink,
        clock: LogicalClock,
        monitor: Optional[Callable[[int], None]] = None,
    ):
        self.graph = graph
        self._sink = sink
        self._clock = clock
        self._monitor = monitor
        self.records_written = 0

    def set_monitor(self, monitor: Optional[Callable[[int], None]]) -> None:
        self._monitor = monitor

    def emit(
        self,
        kind: RecordKind,
        data: Dict[str, Any],
        body: Optional[bytes] = None,
        at: Optional[int] = None,
    ) -> TraceRecord:
        t = self._clock.advance() if at is None else at
        record = TraceRecord(t=t, kind=kind, data=data)
        self._sink.write(record, body)
        self.graph.apply(record)
        self.records_written += 1
        logger.debug("trace_record", t=t, kind=kind.value)
        if self._monitor is not None:
            self._monitor(t)
        return record

    def close(self) -> None:
        self._sink.close()
