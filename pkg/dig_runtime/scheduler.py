"""
Execution Scheduler
Owns the clock, buffers and pending deliveries, and is the only writer
of the trace. Agent decisions are pure functions of a buffer snapshot;
everything they cause is applied here, one record per tick.

Deterministic mode is single-threaded. Concurrent mode runs decisions on
a thread pool behind asyncio while all bookkeeping stays on the event loop.
"""
import asyncio
import hashlib
import json
import math
import random
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Deque, Dict, List, Optional, Set, Tuple

from agents.base import AgentPolicy, PolicyContext, Snapshot, resolve_policy
from detection.detectors import detect_all
from dig_runtime import healer
from dig_runtime.config import get_settings
from dig_runtime.core import LogicalClock, buffer_insert, evaluate_policy, next_due
from dig_runtime.exceptions import ConfigError, DecisionError, DigError, RunLimitExceeded
from dig_runtime.schemas import (
    TRACE_SCHEMA,
    Buffer,
    Decision,
    DeliveryPolicy,
    EdgeAction,
    Event,
    FailureSignal,
    Intervention,
    Payload,
    PayloadKind,
    RecordKind,
    RunConfig,
    RunMetrics,
    RunMode,
    RunResult,
    RunStatus,
    StepOutcome,
)
from dig_runtime.utils.logging import get_logger
from graph.interaction_graph import InteractionGraph
from graph.recorder import TraceRecorder
from tracing.records import MemorySink

logger = get_logger(__name__)


@dataclass
class PendingDelivery:
    """Remaining waves of one event, with delays relative to `base`"""
    event_id: str
    base: int
    policy: DeliveryPolicy
    submit: bool = False
    gated: bool = False

    @property
    def due(self) -> int:
        return self.base if self.submit else self.base + next_due(self.policy)


def agent_seed(seed: int, agent: str) -> int:
    digest = hashlib.sha256(f"{seed}:{agent}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class RunState:
    """Mutable state of one run"""

    def __init__(self, config: RunConfig, root: Payload, sink=None, strict: bool = False):
        self.config = config
        self.agents: List[str] = config.agent_names()
        self.aggregator = config.resolved_aggregator()
        self.root = root
        self.root_problem = root.problem_id
        self.root_range = root.coverage[0]
        self.dataset: List[Any] = json.loads(root.body).get("items", []) if root.body else []
        self.chunk = max(1, math.ceil(self.root_range.size / len(self.agents)))

        self.clock = LogicalClock()
        self.graph = InteractionGraph(strict=strict)
        self.sink = sink if sink is not None else MemorySink()
        self.recorder = TraceRecorder(self.graph, self.sink, self.clock, monitor=self._observe)

        self.specs = {a.name: a.policy for a in config.agents}
        self.policies: Dict[str, AgentPolicy] = {a.name: resolve_policy(a.policy) for a in config.agents}
        self.rngs = {a: random.Random(agent_seed(config.seed, a)) for a in self.agents}
        self.buffers: Dict[str, Buffer] = {a: Buffer() for a in self.agents}
        self.active: Dict[str, Optional[str]] = {a: None for a in self.agents}
        self.memory: Dict[str, Dict[str, Any]] = {a: {} for a in self.agents}
        self.dirty: Set[str] = set()
        self.snapshots: Dict[str, List[str]] = {}

        self.events: Dict[str, Event] = {}
        self.pending: Dict[str, PendingDelivery] = {}
        self.completed: Deque[Tuple[str, Decision]] = deque()
        self.in_flight = 0

        self.signals: Dict[Tuple[str, Tuple[str, ...]], FailureSignal] = {}
        self.healed: Set[Tuple[str, Tuple[str, ...]]] = set()
        self.interventions: List[Intervention] = []
        self._latest: Tuple[int, List[FailureSignal]] = (-1, [])

        self.idle_ticks = 0
        self.terminal = False
        self.final_event_id: Optional[str] = None
        self.started = time.monotonic()
        self._event_seq = 0
        self._activation_seq = 0

    # ------------------------------------------------------------ ids

    def new_event_id(self) -> str:
        self._event_seq += 1
        return f"e{self._event_seq}"

    def new_activation_id(self) -> str:
        self._activation_seq += 1
        return f"v{self._activation_seq}"

    # ------------------------------------------------------------ detection

    def _observe(self, t: int) -> None:
        if not (self.config.detection or self.config.healing):
            return
        signals = detect_all(self.graph, t, self.config.thresholds)
        self._latest = (t, signals)
        for signal in signals:
            key = signal.key()
            if key not in self.signals:
                self.signals[key] = signal
                logger.info(
                    "failure_detected",
                    category=signal.category.value,
                    severity=signal.severity.value,
                    evidence=list(signal.evidence),
                    t=t,
                )

    def current_signals(self) -> List[FailureSignal]:
        if self._latest[0] != self.clock.now:
            self._observe(self.clock.now)
        return self._latest[1] if self._latest[0] == self.clock.now else []

    # ------------------------------------------------------------ pending deliveries

    def schedule(
        self,
        event_id: str,
        policy: DeliveryPolicy,
        base: int,
        submit: bool = False,
        gated: bool = False,
    ) -> None:
        """Replace any remaining waves of `event_id` with `policy`"""
        if policy.exhausted and not submit:
            self.pending.pop(event_id, None)
            return
        self.pending[event_id] = PendingDelivery(event_id, base, policy, submit=submit, gated=gated)

    def add_event(self, event: Event, base: int) -> None:
        self.events[event.event_id] = event
        self.schedule(event.event_id, event.policy, base, submit=event.payload.is_final_answer)

    def next_due(self) -> Optional[PendingDelivery]:
        due = [p for p in self.pending.values() if p.due <= self.clock.now]
        if not due:
            return None
        return min(due, key=lambda p: (p.due, p.event_id))

    def next_ready_agent(self) -> Optional[str]:
        for agent in sorted(self.dirty):
            if self.active[agent] is None and len(self.buffers[agent]):
                return agent
        return None

    def fetch(self, start: int, end: int) -> List[Any]:
        return self.dataset[start:end]

    def context(self, agent: str) -> PolicyContext:
        return PolicyContext(
            self_id=agent,
            peers=tuple(a for a in self.agents if a != agent),
            agents=tuple(self.agents),
            aggregator=self.aggregator,
            root=self.root_range,
            root_problem=self.root_problem,
            chunk=self.chunk,
            fanout=self.config.fanout,
            rng=self.rngs[agent],
            now=self.clock.now,
            memory=self.memory[agent],
            params=dict(self.specs[agent].params),
            fetch=self.fetch,
        )

    def check_limits(self) -> None:
        if self.clock.now >= self.config.max_ticks:
            raise RunLimitExceeded(f"max_ticks {self.config.max_ticks} reached")
        if time.monotonic() - self.started > self.config.max_wall_seconds:
            raise RunLimitExceeded(f"max_wall_seconds {self.config.max_wall_seconds} reached")


def _validate_config(config: RunConfig, root: Payload) -> None:
    names = config.agent_names()
    if not names:
        raise ConfigError("At least one agent is required")
    if len(set(names)) != len(names):
        raise ConfigError(f"Duplicate agent names: {names}")
    if not config.initial_recipients:
        raise ConfigError("initial_recipients must not be empty")
    unknown = set(config.initial_recipients) - set(names)
    if unknown:
        raise ConfigError(f"Initial recipients not in agent set: {sorted(unknown)}")
    if config.resolved_aggregator() not in names:
        raise ConfigError(f"Aggregator {config.resolved_aggregator()} is not an agent")
    if root.kind != PayloadKind.PROBLEM or len(root.coverage) != 1:
        raise ConfigError("Root payload must be a problem with exactly one coverage range")


def init_run(config: RunConfig, root: Payload, sink=None, strict: bool = False) -> RunState:
    """Create the run, write run_meta at tick 0 and hand e0 to the initial recipients"""
    _validate_config(config, root)
    state = RunState(config, root, sink=sink, strict=strict)
    recipients = sorted(set(config.initial_recipients))
    e0 = Event(event_id="e0", payload=root, policy=DeliveryPolicy.immediate(recipients), generated_at=0)
    state.events["e0"] = e0

    state.recorder.emit(
        RecordKind.RUN_META,
        {
            "schema": TRACE_SCHEMA,
            "agents": list(state.agents),
            "initial_recipients": recipients,
            "aggregator": state.aggregator,
            "seed": config.seed,
            "mode": config.mode.value,
            "healing": config.healing,
            "thresholds": config.thresholds.model_dump(),
            "root": {"event_id": "e0", "payload": root.envelope(), "policy": e0.policy.to_list()},
        },
        body=root.body,
        at=0,
    )
    for agent in recipients:
        state.buffers[agent] = buffer_insert(state.buffers[agent], "e0", 0)
        state.dirty.add(agent)

    logger.info(
        "run_started",
        agents=len(state.agents),
        aggregator=state.aggregator,
        seed=config.seed,
        mode=config.mode.value,
        healing=config.healing,
    )
    return state


# ---------------------------------------------------------------- bookkeeping steps


def _deliver(state: RunState, entry: PendingDelivery) -> None:
    event_id = entry.event_id
    if state.config.healing and not entry.gated:
        entry.gated = True
        healer.gate_event(state, state.events[event_id])
        entry = state.pending.get(event_id)
        if entry is None or entry.due > state.clock.now:
            return

    event = state.events[event_id]
    if entry.submit and event.payload.is_final_answer:
        state.pending.pop(event_id)
        state.recorder.emit(RecordKind.SUBMIT, {"event_id": event_id})
        state.terminal = True
        state.final_event_id = event_id
        logger.info("final_answer_submitted", event_id=event_id, t=state.clock.now)
        return

    due, remaining = evaluate_policy(entry.policy, state.clock.now - entry.base)
    delivered, dropped = [], []
    for agent in sorted(due):
        if agent not in state.buffers:
            logger.warning("unknown_recipient", event_id=event_id, recipient=agent)
            dropped.append(agent)
        elif event_id in state.buffers[agent]:
            dropped.append(agent)
        else:
            delivered.append(agent)

    record = state.recorder.emit(
        RecordKind.EVENT_DELIVERED,
        {"event_id": event_id, "recipients": delivered, "dropped": dropped},
    )
    for agent in delivered:
        state.buffers[agent] = buffer_insert(state.buffers[agent], event_id, record.t)
        state.dirty.add(agent)

    if remaining.exhausted:
        state.pending.pop(event_id, None)
    else:
        entry.policy = remaining


def _begin_activation(state: RunState, agent: str) -> Tuple[str, Snapshot, PolicyContext]:
    activation_id = state.new_activation_id()
    entries = state.buffers[agent].entries
    snapshot = [(state.events[e.event_id], e.received_at) for e in entries]
    state.recorder.emit(
        RecordKind.ACTIVATION_START,
        {
            "activation": activation_id,
            "agent": agent,
            "inputs": [[e.event_id, e.received_at] for e in entries],
        },
    )
    state.active[agent] = activation_id
    state.dirty.discard(agent)
    state.snapshots[activation_id] = [e.event_id for e in entries]
    return activation_id, snapshot, state.context(agent)


def _think(policy: AgentPolicy, ctx: PolicyContext, snapshot: Snapshot) -> Decision:
    try:
        return policy.decide(ctx, snapshot)
    except DigError:
        raise
    except Exception as e:
        raise DecisionError(f"Policy {policy.name} failed for {ctx.self_id}: {e}") from e


def _validate_decision(agent: str, snapshot_ids: List[str], decision: Decision) -> None:
    if set(decision.actions) != set(snapshot_ids):
        missing = sorted(set(snapshot_ids) - set(decision.actions))
        extra = sorted(set(decision.actions) - set(snapshot_ids))
        raise DecisionError(f"{agent}: labeling mismatch (missing {missing}, unknown {extra})")
    for event_id, action in decision.actions.items():
        if action.action == EdgeAction.PENDING:
            raise DecisionError(f"{agent}: pending is not a decision for {event_id}")
        if action.action == EdgeAction.REROUTE and (not action.targets or agent in action.targets):
            raise DecisionError(f"{agent}: reroute of {event_id} needs targets other than itself")
    finals = [o for o in decision.outputs if o.payload.is_final_answer]
    if len(finals) != (1 if decision.submit else 0):
        raise DecisionError(f"{agent}: submit={decision.submit} with {len(finals)} final outputs")
    for output in decision.outputs:
        if output.payload.kind == PayloadKind.SYSTEM:
            raise DecisionError(f"{agent}: agents cannot emit system events")
        if output.payload.is_final_answer and not output.policy.exhausted:
            raise DecisionError(f"{agent}: the final answer goes to the environment only")


def apply_decision(state: RunState, activation_id: str, decision: Decision) -> None:
    """Write one activation's decision, outputs and end as consecutive records"""
    agent = state.graph.agent_of(activation_id)
    if state.active.get(agent) != activation_id:
        raise DecisionError(f"Activation {activation_id} is not open")
    snapshot_ids = state.snapshots.pop(activation_id)
    _validate_decision(agent, snapshot_ids, decision)

    actions = [
        {
            "event_id": event_id,
            "action": decision.actions[event_id].action.value,
            "targets": list(decision.actions[event_id].targets),
        }
        for event_id in snapshot_ids
    ]
    record = state.recorder.emit(
        RecordKind.DECISION,
        {"activation": activation_id, "actions": actions, "submit": decision.submit},
    )

    leaving = [eid for eid in snapshot_ids if decision.actions[eid].action != EdgeAction.DELAY]
    state.buffers[agent] = state.buffers[agent].without(leaving)
    for event_id in snapshot_ids:
        action = decision.actions[event_id]
        if action.action != EdgeAction.REROUTE:
            continue
        policy = DeliveryPolicy.immediate(action.targets)
        event = state.events[event_id]
        state.events[event_id] = event.model_copy(
            update={"policy": policy, "reroute_count": event.reroute_count + 1}
        )
        state.schedule(event_id, policy, base=record.t)

    for output in decision.outputs:
        event_id = state.new_event_id()
        generated = state.recorder.emit(
            RecordKind.EVENT_GENERATED,
            {
                "event_id": event_id,
                "origin": activation_id,
                "payload": output.payload.envelope(),
                "policy": output.policy.to_list(),
            },
            body=output.payload.body,
        )
        state.add_event(
            Event(
                event_id=event_id,
                payload=output.payload,
                policy=output.policy,
                origin=activation_id,
                generated_at=generated.t,
            ),
            base=generated.t,
        )

    if decision.memory is not None:
        state.memory[agent] = decision.memory
    state.recorder.emit(RecordKind.ACTIVATION_END, {"activation": activation_id})
    state.active[agent] = None


def _idle(state: RunState) -> StepOutcome:
    """Advance time with nothing to do; only here can stalls surface"""
    waiting = bool(state.pending) or state.in_flight > 0
    t = state.clock.advance()
    if not waiting:
        state.idle_ticks += 1
    state._observe(t)
    if state.config.healing and healer.poll_idle(state) is not None:
        state.idle_ticks = 0
    return StepOutcome.QUIESCENT


def step(state: RunState) -> StepOutcome:
    """
    Perform at most one unit of bookkeeping, in priority order:
    a due delivery, then an activation start, then a completed decision.
    """
    if state.terminal:
        return StepOutcome.TERMINAL
    state.check_limits()

    entry = state.next_due()
    if entry is not None:
        _deliver(state, entry)
        state.idle_ticks = 0
        return StepOutcome.TERMINAL if state.terminal else StepOutcome.PROGRESSED

    agent = state.next_ready_agent()
    if agent is not None:
        activation_id, snapshot, ctx = _begin_activation(state, agent)
        state.completed.append((activation_id, _think(state.policies[agent], ctx, snapshot)))
        state.idle_ticks = 0
        return StepOutcome.PROGRESSED

    if state.completed:
        activation_id, decision = state.completed.popleft()
        apply_decision(state, activation_id, decision)
        state.idle_ticks = 0
        return StepOutcome.PROGRESSED

    return _idle(state)


def finish_run(state: RunState, status: RunStatus) -> RunResult:
    """Write run_end, close the sink and summarize"""
    open_work = sorted(set(state.pending) | {eid for b in state.buffers.values() for eid in b.event_ids()})
    state.recorder.emit(
        RecordKind.RUN_END,
        {"status": status.value, "pending": open_work, "final_event": state.final_event_id},
    )
    state.recorder.close()
    metrics = RunMetrics(
        ticks=state.clock.now,
        wall_seconds=round(time.monotonic() - state.started, 6),
        activations=len(state.graph.activations),
        events=len(state.graph.events),
        interventions=len(state.interventions),
    )
    result = RunResult(
        status=status,
        final_event=state.events.get(state.final_event_id) if state.final_event_id else None,
        metrics=metrics,
        signals=list(state.signals.values()),
        interventions=list(state.interventions),
    )
    logger.info(
        "run_finished",
        status=status.value,
        ticks=metrics.ticks,
        activations=metrics.activations,
        events=metrics.events,
        interventions=metrics.interventions,
        signals=result.signal_counts(),
    )
    return result


def run_to_completion(state: RunState) -> RunResult:
    """Drive a run until it terminates, goes quiet for idle_limit ticks, or hits a limit"""
    if state.config.mode == RunMode.CONCURRENT:
        return asyncio.run(run_concurrent(state))
    try:
        while True:
            outcome = step(state)
            if outcome == StepOutcome.TERMINAL:
                status = RunStatus.TERMINAL
                break
            if outcome == StepOutcome.QUIESCENT and state.idle_ticks >= state.config.idle_limit:
                status = RunStatus.QUIESCENT_TIMEOUT
                break
    except RunLimitExceeded as e:
        logger.warning("run_limit_exceeded", reason=str(e), t=state.clock.now)
        status = RunStatus.LIMIT_EXCEEDED
    return finish_run(state, status)


async def run_concurrent(state: RunState, workers: Optional[int] = None) -> RunResult:
    """
    Concurrent mode: decisions run on worker threads and come back through
    a queue in completion order. Bookkeeping stays single-writer.
    """
    loop = asyncio.get_running_loop()
    queue: asyncio.Queue = asyncio.Queue()
    executor = ThreadPoolExecutor(max_workers=workers or get_settings().worker_threads)
    tasks: Set[asyncio.Task] = set()

    async def think(activation_id: str, agent: str, ctx: PolicyContext, snapshot: Snapshot) -> None:
        try:
            decision = await loop.run_in_executor(executor, _think, state.policies[agent], ctx, snapshot)
        except Exception as e:
            await queue.put((activation_id, e))
            return
        await queue.put((activation_id, decision))

    try:
        while True:
            if state.terminal:
                status = RunStatus.TERMINAL
                break
            state.check_limits()

            entry = state.next_due()
            if entry is not None:
                _deliver(state, entry)
                state.idle_ticks = 0
                continue

            agent = state.next_ready_agent()
            if agent is not None:
                activation_id, snapshot, ctx = _begin_activation(state, agent)
                state.in_flight += 1
                task = asyncio.create_task(think(activation_id, agent, ctx, snapshot))
                tasks.add(task)
                task.add_done_callback(tasks.discard)
                continue

            if state.in_flight:
                activation_id, result = await queue.get()
                state.in_flight -= 1
                if isinstance(result, Exception):
                    raise result
                apply_decision(state, activation_id, result)
                state.idle_ticks = 0
                continue

            _idle(state)
            if state.idle_ticks >= state.config.idle_limit:
                status = RunStatus.QUIESCENT_TIMEOUT
                break
    except RunLimitExceeded as e:
        logger.warning("run_limit_exceeded", reason=str(e), t=state.clock.now)
        status = RunStatus.LIMIT_EXCEEDED
    finally:
        for task in tasks:
            task.cancel()
        executor.shutdown(wait=False, cancel_futures=True)
    return finish_run(state, status)


def run(config: RunConfig, root: Payload, sink=None, strict: bool = False) -> Tuple[RunState, RunResult]:
    """init_run + run_to_completion"""
    state = init_run(config, root, sink=sink, strict=strict)
    return state, run_to_completion(state)
