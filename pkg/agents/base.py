"""
Agent policy contract, registry and decision builder
"""
import copy
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, Dict, Iterable, List, Optional, Sequence, Tuple, Type

from dig_runtime.exceptions import ConfigError, DecisionError
from dig_runtime.schemas import (
    Action,
    CoverageRange,
    Decision,
    DeliveryPolicy,
    EdgeAction,
    Event,
    Output,
    Payload,
    PolicySpec,
)
from dig_runtime.utils.logging import get_logger

logger = get_logger(__name__)

Snapshot = Sequence[Tuple[Event, int]]


@dataclass(frozen=True)
class PolicyContext:
    """What one agent may see while deciding"""
    self_id: str
    peers: Tuple[str, ...]
    agents: Tuple[str, ...]
    aggregator: str
    root: CoverageRange
    root_problem: str
    chunk: int
    fanout: int
    rng: random.Random
    now: int = 0
    memory: Dict[str, Any] = field(default_factory=dict)
    params: Dict[str, Any] = field(default_factory=dict)
    fetch: Optional[Callable[[int, int], List[Any]]] = None

    @property
    def is_aggregator(self) -> bool:
        return self.self_id == self.aggregator


class AgentPolicy(ABC):
    """Pure decision function f_a over a buffer snapshot"""

    name: ClassVar[str] = ""

    def __init__(self, params: Optional[Dict[str, Any]] = None):
        self.params = dict(params or {})

    @abstractmethod
    def decide(self, ctx: PolicyContext, snapshot: Snapshot) -> Decision:
        ...


_REGISTRY: Dict[str, Type[AgentPolicy]] = {}


def register_policy(name: str):
    def wrap(cls: Type[AgentPolicy]) -> Type[AgentPolicy]:
        if name in _REGISTRY:
            raise ConfigError(f"Policy {name} registered twice")
        cls.name = name
        _REGISTRY[name] = cls
        return cls
    return wrap


def available_policies() -> List[str]:
    return sorted(_REGISTRY)


def resolve_policy(spec: PolicySpec) -> AgentPolicy:
    try:
        cls = _REGISTRY[spec.name]
    except KeyError:
        raise ConfigError(f"Unknown policy: {spec.name}. Registered: {available_policies()}")
    return cls(spec.params)


def decide(policy: PolicySpec, ctx: PolicyContext, buffer_snapshot: Snapshot) -> Decision:
    if not buffer_snapshot:
        raise DecisionError(f"Empty snapshot for {ctx.self_id}")
    return resolve_policy(policy).decide(ctx, buffer_snapshot)


class DecisionBuilder:
    """Accumulates one activation's actions and outputs"""

    def __init__(self, ctx: PolicyContext, snapshot: Snapshot):
        self.ctx = ctx
        self._snapshot_ids = [event.event_id for event, _ in snapshot]
        self._actions: Dict[str, Action] = {}
        self._outputs: List[Output] = []
        self._submit = False
        self.memory: Dict[str, Any] = copy.deepcopy(ctx.memory)

    def _set(self, event_id: str, action: Action) -> None:
        if event_id in self._actions:
            raise DecisionError(f"Event {event_id} already has an action")
        self._actions[event_id] = action

    def consume(self, event_id: str) -> None:
        self._set(event_id, Action(action=EdgeAction.CONSUME))

    def delay(self, event_id: str) -> None:
        self._set(event_id, Action(action=EdgeAction.DELAY))

    def discard(self, event_id: str) -> None:
        self._set(event_id, Action(action=EdgeAction.DISCARD))

    def reroute(self, event_id: str, targets: Iterable[str]) -> None:
        targets = tuple(t for t in targets if t != self.ctx.self_id)
        if not targets:
            # nowhere else to send it; keep it
            self.delay(event_id)
            return
        self._set(event_id, Action(action=EdgeAction.REROUTE, targets=targets))

    def decided(self, event_id: str) -> bool:
        return event_id in self._actions

    def emit(self, payload: Payload, recipients: Iterable[str]) -> None:
        self._outputs.append(Output(payload=payload, policy=DeliveryPolicy.immediate(recipients)))

    def emit_with_policy(self, payload: Payload, policy: DeliveryPolicy) -> None:
        self._outputs.append(Output(payload=payload, policy=policy))

    @property
    def submitting(self) -> bool:
        return self._submit

    def submit(self, payload: Payload) -> None:
        if self._submit:
            raise DecisionError("A decision can submit only once")
        if not payload.is_final_answer:
            payload = payload.model_copy(update={"is_final_answer": True})
        self._outputs.append(Output(payload=payload, policy=DeliveryPolicy()))
        self._submit = True

    def build(self) -> Decision:
        # undecided inputs stay buffered
        for event_id in self._snapshot_ids:
            if event_id not in self._actions:
                self._actions[event_id] = Action(action=EdgeAction.DELAY)
        memory = self.memory if self.memory != self.ctx.memory else None
        return Decision(
            actions=dict(self._actions),
            outputs=list(self._outputs),
            submit=self._submit,
            memory=memory,
        )
