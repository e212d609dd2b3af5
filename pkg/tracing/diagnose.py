"""
Offline diagnosis
Replays a trace and evaluates every detector at each recorded tick and at
the last idle tick before it, deduplicating signals by (class, evidence).
"""
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from detection.detectors import detect_all
from dig_runtime.schemas import CLASS_ORDER, FailureSignal, RecordKind, ThresholdSet
from dig_runtime.utils.logging import get_logger
from graph.interaction_graph import InteractionGraph
from tracing.replay import TraceSource, load_records

logger = get_logger(__name__)


class DiagnosisReport(BaseModel):
    signals: List[FailureSignal] = Field(default_factory=list)
    thresholds: ThresholdSet = Field(default_factory=ThresholdSet)
    records: int = 0
    status: Optional[str] = None

    def counts(self) -> Dict[str, int]:
        out = {c.value: 0 for c in CLASS_ORDER}
        for s in self.signals:
            out[s.category.value] += 1
        return out

    def keys(self):
        return {s.key() for s in self.signals}

    def to_summary(self) -> Dict:
        return {
            "records": self.records,
            "status": self.status,
            "thresholds": self.thresholds.model_dump(),
            "counts": self.counts(),
            "signals": [
                {
                    "class": s.category.value,
                    "severity": s.severity.value,
                    "evidence": list(s.evidence),
                    "detected_at": s.detected_at,
                }
                for s in self.signals
            ],
        }


def diagnose(trace: TraceSource, thresholds: Optional[ThresholdSet] = None, **overrides) -> DiagnosisReport:
    """
    Thresholds come from run_meta unless given; keyword overrides
    (mc_window=..., er_max_reroutes=...) replace single values.
    """
    records = load_records(trace)
    if thresholds is None:
        recorded = records[0].data.get("thresholds", {}) if records else {}
        thresholds = ThresholdSet(**recorded)
    if overrides:
        thresholds = thresholds.model_copy(update={k: v for k, v in overrides.items() if v is not None})
        thresholds = ThresholdSet.model_validate(thresholds.model_dump())

    graph = InteractionGraph()
    seen: Dict[Tuple[str, Tuple[str, ...]], FailureSignal] = {}
    status = None

    def collect(t: int) -> None:
        for signal in detect_all(graph, t, thresholds):
            seen.setdefault(signal.key(), signal)

    for i, record in enumerate(records):
        if i > 0 and record.t - 1 > records[i - 1].t:
            # graph is unchanged over idle ticks; the last one dominates
            collect(record.t - 1)
        graph.apply(record)
        collect(record.t)
        if record.kind == RecordKind.RUN_END:
            status = record.data.get("status")

    report = DiagnosisReport(signals=list(seen.values()), thresholds=thresholds, records=len(records), status=status)
    logger.info("trace_diagnosed", records=len(records), **report.counts())
    return report
