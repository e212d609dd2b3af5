"""
Domain vocabulary shared by every module: payloads, events, buffers,
delivery policies, decisions, failure signals and trace records.
"""
import hashlib
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

VIRTUAL_ROOT = "root"
TRACE_SCHEMA = "dig-trace/1"


class PayloadKind(str, Enum):
    PROBLEM = "problem"
    RAW_DATA = "raw_data"
    SOLUTION = "solution"
    SYSTEM = "system"


class EdgeAction(str, Enum):
    CONSUME = "consume"
    DELAY = "delay"
    REROUTE = "reroute"
    DISCARD = "discard"
    PENDING = "pending"


class Attribution(str, Enum):
    PRODUCTIVE = "productive"
    NON_PRODUCTIVE = "non_productive"
    PENDING = "pending"


class RunMode(str, Enum):
    DETERMINISTIC = "deterministic"
    CONCURRENT = "concurrent"


class RunStatus(str, Enum):
    TERMINAL = "terminal"
    QUIESCENT_TIMEOUT = "quiescent-timeout"
    LIMIT_EXCEEDED = "limit-exceeded"


class StepOutcome(str, Enum):
    PROGRESSED = "progressed"
    QUIESCENT = "quiescent"
    TERMINAL = "terminal"


class FailureClass(str, Enum):
    ET = "ET"
    MC = "MC"
    OE = "OE"
    DL = "DL"
    ER = "ER"
    CLA = "CLA"
    RSP = "RSP"


class Severity(str, Enum):
    FAILURE = "failure"
    WARNING = "warning"


FAILURE_CLASSES = (FailureClass.ET, FailureClass.MC, FailureClass.OE, FailureClass.DL)
WARNING_CLASSES = (FailureClass.ER, FailureClass.CLA, FailureClass.RSP)
CLASS_ORDER = FAILURE_CLASSES + WARNING_CLASSES


def severity_of(cls: FailureClass) -> Severity:
    return Severity.FAILURE if cls in FAILURE_CLASSES else Severity.WARNING


class InterventionMethod(str, Enum):
    INJECT_INFO = "inject_info"
    INJECT_AND_REROUTE = "inject_and_reroute"
    CREATE_SYSTEM_EVENT = "create_system_event"


class GateKind(str, Enum):
    RELEASE = "release"
    RELEASE_MODIFIED = "release_modified"
    RELEASE_PLUS = "release_plus"


class RecordKind(str, Enum):
    RUN_META = "run_meta"
    ACTIVATION_START = "activation_start"
    ACTIVATION_END = "activation_end"
    DECISION = "decision"
    EVENT_GENERATED = "event_generated"
    EVENT_DELIVERED = "event_delivered"
    EVENT_BLOCKED = "event_blocked"
    INTERVENTION = "intervention"
    SUBMIT = "submit"
    RUN_END = "run_end"


# ---------------------------------------------------------------- payloads


class CoverageRange(BaseModel):
    """Half-open slice [start, end) of the root problem"""
    model_config = ConfigDict(frozen=True)

    start: int = Field(..., ge=0)
    end: int

    @model_validator(mode="after")
    def _non_empty(self):
        if self.end <= self.start:
            raise ValueError(f"Empty coverage range [{self.start}, {self.end})")
        return self

    @property
    def size(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "CoverageRange") -> bool:
        return self.start < other.end and other.start < self.end


class Payload(BaseModel):
    """Event payload: structured envelope plus opaque body"""
    model_config = ConfigDict(frozen=True)

    kind: PayloadKind = Field(..., description="Payload kind")
    problem_id: str = Field(..., description="Problem this payload concerns")
    body: bytes = Field(default=b"", description="Opaque body, never read by detectors")
    coverage: Tuple[CoverageRange, ...] = Field(default=())
    is_final_answer: bool = Field(default=False)
    injected_notes: Tuple[str, ...] = Field(default=())

    @model_validator(mode="after")
    def _final_is_solution(self):
        if self.is_final_answer and self.kind != PayloadKind.SOLUTION:
            raise ValueError("is_final_answer requires kind = solution")
        return self

    def body_digest(self) -> str:
        return hashlib.sha256(self.body).hexdigest()

    def with_note(self, note: str) -> "Payload":
        return self.model_copy(update={"injected_notes": self.injected_notes + (note,)})

    def envelope(self) -> Dict[str, Any]:
        """Everything except the body, which travels as a digest"""
        return {
            "kind": self.kind.value,
            "problem_id": self.problem_id,
            "coverage": [[r.start, r.end] for r in self.coverage],
            "is_final_answer": self.is_final_answer,
            "notes": list(self.injected_notes),
            "body_digest": self.body_digest(),
            "body_size": len(self.body),
        }


class DeliveryWave(BaseModel):
    model_config = ConfigDict(frozen=True)

    delay: int = Field(..., ge=0)
    recipients: Tuple[str, ...] = Field(...)

    @field_validator("recipients")
    @classmethod
    def _sorted_unique(cls, value):
        return tuple(sorted(set(value)))


class DeliveryPolicy(BaseModel):
    """Finite staged schedule; the event expires when it is empty"""
    model_config = ConfigDict(frozen=True)

    schedule: Tuple[DeliveryWave, ...] = Field(default=())

    @property
    def exhausted(self) -> bool:
        return len(self.schedule) == 0

    @classmethod
    def immediate(cls, recipients) -> "DeliveryPolicy":
        return cls(schedule=(DeliveryWave(delay=0, recipients=tuple(recipients)),))

    def recipients(self) -> List[str]:
        out: List[str] = []
        for wave in self.schedule:
            out.extend(wave.recipients)
        return out

    def to_list(self) -> List[List[Any]]:
        return [[w.delay, list(w.recipients)] for w in self.schedule]

    @classmethod
    def from_list(cls, raw) -> "DeliveryPolicy":
        return cls(schedule=tuple(DeliveryWave(delay=d, recipients=tuple(r)) for d, r in raw))


class Event(BaseModel):
    model_config = ConfigDict(frozen=True)

    event_id: str
    payload: Payload
    policy: DeliveryPolicy = Field(default_factory=DeliveryPolicy)
    origin: Optional[str] = Field(default=None, description="Generating activation; None for e0 and healer events")
    generated_at: int = Field(..., ge=0)
    reroute_count: int = Field(default=0, ge=0)


class BufferEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    event_id: str
    received_at: int

    def sort_key(self):
        return (self.received_at, self.event_id)


class Buffer(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: Tuple[BufferEntry, ...] = Field(default=())

    def __contains__(self, event_id: str) -> bool:
        return any(e.event_id == event_id for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def event_ids(self) -> List[str]:
        return [e.event_id for e in self.entries]

    def without(self, event_ids) -> "Buffer":
        drop = set(event_ids)
        return Buffer(entries=tuple(e for e in self.entries if e.event_id not in drop))


# ---------------------------------------------------------------- decisions


class Action(BaseModel):
    model_config = ConfigDict(frozen=True)

    action: EdgeAction
    targets: Tuple[str, ...] = Field(default=())

    @field_validator("targets")
    @classmethod
    def _sorted_unique(cls, value):
        return tuple(sorted(set(value)))


class Output(BaseModel):
    model_config = ConfigDict(frozen=True)

    payload: Payload
    policy: DeliveryPolicy = Field(default_factory=DeliveryPolicy)


class Decision(BaseModel):
    """One activation's verdict on its buffer snapshot"""
    actions: Dict[str, Action] = Field(default_factory=dict)
    outputs: List[Output] = Field(default_factory=list)
    submit: bool = False
    memory: Optional[Dict[str, Any]] = Field(default=None, description="Replacement for the agent's private memory")


class SolutionBody(BaseModel):
    """Parsed body of a solution payload"""
    counts: Dict[str, int]


# ---------------------------------------------------------------- run setup


class ThresholdSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    mc_window: int = Field(default=10, gt=0)
    oe_window: int = Field(default=5, gt=0)
    dl_window: int = Field(default=5, gt=0)
    er_max_reroutes: int = Field(default=3, gt=0)


class PolicySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = Field(default="honest")
    params: Dict[str, Any] = Field(default_factory=dict)


class AgentSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    policy: PolicySpec = Field(default_factory=PolicySpec)


class RunConfig(BaseModel):
    agents: List[AgentSpec] = Field(..., description="Ordered agents with their policies")
    initial_recipients: List[str] = Field(..., description="Agents receiving e0 at tick 0")
    aggregator: Optional[str] = Field(default=None, description="Defaults to the first initial recipient")
    seed: int = 0
    mode: RunMode = RunMode.DETERMINISTIC
    healing: bool = False
    heal_classes: Tuple[FailureClass, ...] = Field(default=CLASS_ORDER)
    detection: bool = True
    thresholds: ThresholdSet = Field(default_factory=ThresholdSet)
    max_ticks: int = Field(default=100_000, gt=0)
    max_wall_seconds: float = Field(default=60.0, gt=0)
    idle_limit: int = Field(default=30, gt=0)
    fanout: int = Field(default=2, ge=2)

    def agent_names(self) -> List[str]:
        return [a.name for a in self.agents]

    def resolved_aggregator(self) -> str:
        return self.aggregator or min(self.initial_recipients)


# ---------------------------------------------------------------- detection / healing


class FailureSignal(BaseModel):
    model_config = ConfigDict(frozen=True)

    category: FailureClass
    severity: Severity
    evidence: Tuple[str, ...]
    detected_at: int

    def key(self) -> Tuple[str, Tuple[str, ...]]:
        return (self.category.value, self.evidence)


class Intervention(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: InterventionMethod
    target: Optional[str] = Field(default=None, description="Event modified; None for create_system_event")
    message: str
    recipients: Tuple[str, ...] = Field(default=())
    applied_at: int
    signal: FailureSignal
    created: Optional[Event] = Field(default=None, description="System event for create_system_event")


class GateOutcome(BaseModel):
    kind: GateKind
    event: Optional[Event] = None
    extra: Optional[Event] = None
    intervention: Optional[Intervention] = None


# ---------------------------------------------------------------- trace


class TraceRecord(BaseModel):
    """One append-only line of the execution trace"""
    model_config = ConfigDict(frozen=True)

    t: int = Field(..., ge=0)
    kind: RecordKind
    data: Dict[str, Any] = Field(default_factory=dict)


class RunMetrics(BaseModel):
    ticks: int = 0
    wall_seconds: float = 0.0
    activations: int = 0
    events: int = 0
    interventions: int = 0


class RunResult(BaseModel):
    status: RunStatus
    final_event: Optional[Event] = None
    metrics: RunMetrics = Field(default_factory=RunMetrics)
    signals: List[FailureSignal] = Field(default_factory=list)
    interventions: List[Intervention] = Field(default_factory=list)

    def signal_counts(self) -> Dict[str, int]:
        counts = {c.value: 0 for c in CLASS_ORDER}
        for s in self.signals:
            counts[s.category.value] += 1
        return counts


# ---------------------------------------------------------------- commands


class CommandResult(BaseModel):
    """CLI subcommand result wrapper"""
    success: bool
    data: Optional[dict] = None
    text: Optional[str] = Field(default=None, description="Preformatted stdout output, e.g. the bench table")
    error: Optional[str] = None
    latency_ms: float = 0.0
