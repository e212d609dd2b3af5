"""
Healing gate

Every event passes the gate once after generation or reroute. The gate
runs detection on the current graph and applies at most one intervention
per pass: inject a note, inject and reroute, or create a system event.
It never drops an event or labels an edge; agents see the change through
ordinary delivery.
"""
from typing import TYPE_CHECKING, List, Optional

from agents import notes
from dig_runtime.exceptions import UnknownFailureClassError
from dig_runtime.schemas import (
    CLASS_ORDER,
    DeliveryPolicy,
    Event,
    FailureClass,
    FailureSignal,
    GateKind,
    GateOutcome,
    Intervention,
    InterventionMethod,
    Payload,
    PayloadKind,
    RecordKind,
    Severity,
)
from dig_runtime.utils.logging import get_logger
from graph.interaction_graph import InteractionGraph

if TYPE_CHECKING:
    from dig_runtime.scheduler import RunState

logger = get_logger(__name__)

_CREATES = {FailureClass.MC, FailureClass.DL}


def _evidence_age(graph: InteractionGraph, signal: FailureSignal) -> int:
    times = [graph.node_time(n) for n in signal.evidence if n in graph.events or n in graph.activations]
    return min(times) if times else signal.detected_at


def prioritize(graph: InteractionGraph, signals: List[FailureSignal]) -> List[FailureSignal]:
    """Failures before warnings, then oldest evidence first"""
    return sorted(
        signals,
        key=lambda s: (
            0 if s.severity == Severity.FAILURE else 1,
            _evidence_age(graph, s),
            CLASS_ORDER.index(s.category),
            s.evidence,
        ),
    )


def _applicable(graph: InteractionGraph, signal: FailureSignal, carrier: Optional[Event]) -> bool:
    cls = signal.category
    if cls == FailureClass.ET:
        return (
            carrier is not None
            and carrier.payload.is_final_answer
            and graph.final_event() == carrier.event_id
            and carrier.origin is not None
        )
    if cls in _CREATES:
        # system events never spawn further system events
        return carrier is None or carrier.payload.kind != PayloadKind.SYSTEM
    if cls == FailureClass.OE:
        return bool(signal.evidence) and graph.events[signal.evidence[0]].origin is not None
    if cls == FailureClass.ER:
        return carrier is not None and carrier.event_id == signal.evidence[0]
    return carrier is not None


def _lineage(graph: InteractionGraph, event_id: str) -> str:
    """event/activation chain back to the root, following first consumed inputs"""
    chain = [event_id]
    node = graph.events[event_id]
    while node.origin is not None:
        chain.append(node.origin)
        inputs = graph.consumed_inputs(node.origin)
        if not inputs:
            break
        chain.append(inputs[0])
        node = graph.events[inputs[0]]
    return "/".join(chain)


def heal(
    signal: FailureSignal,
    graph: InteractionGraph,
    state: "RunState",
    carrier: Optional[Event] = None,
    at: Optional[int] = None,
) -> Intervention:
    """Map one signal to its intervention"""
    at = state.clock.now + 1 if at is None else at
    cls = signal.category
    evidence = list(signal.evidence)

    if cls == FailureClass.ET:
        submitter = graph.agent_of(carrier.origin)
        return Intervention(
            method=InterventionMethod.INJECT_AND_REROUTE,
            target=carrier.event_id,
            message=notes.format_note(notes.UNRESOLVED, signal=cls.value, events=evidence),
            recipients=(submitter,),
            applied_at=at,
            signal=signal,
        )

    if cls == FailureClass.MC:
        recipients = (graph.agent_of(evidence[0]),) if evidence else tuple(state.agents)
        return _system_event(state, signal, notes.format_note(notes.EXHAUSTED, signal=cls.value), recipients, at)

    if cls == FailureClass.OE:
        orphan = graph.events[evidence[0]]
        return Intervention(
            method=InterventionMethod.INJECT_AND_REROUTE,
            target=orphan.event_id,
            message=notes.format_note(notes.ORPHANED, signal=cls.value, events=evidence),
            recipients=(graph.agent_of(orphan.origin),),
            applied_at=at,
            signal=signal,
        )

    if cls == FailureClass.DL:
        message = notes.format_note(notes.STALLED, signal=cls.value, events=evidence)
        return _system_event(state, signal, message, tuple(state.agents), at)

    if cls == FailureClass.ER:
        target = evidence[0]
        message = notes.format_note(
            notes.REROUTED, signal=cls.value, events=evidence, count=graph.events[target].reroute_count
        )
        return Intervention(
            method=InterventionMethod.INJECT_INFO, target=target, message=message, applied_at=at, signal=signal
        )

    if cls == FailureClass.CLA:
        activation, events = evidence[0], evidence[1:]
        message = notes.format_note(
            notes.LINEAGE, signal=cls.value, activation=activation, events=events,
            chains=[_lineage(graph, e) for e in events],
        )
        return Intervention(
            method=InterventionMethod.INJECT_INFO, target=carrier.event_id, message=message,
            applied_at=at, signal=signal,
        )

    if cls == FailureClass.RSP:
        message = notes.format_note(
            notes.OVERLAP, signal=cls.value, events=evidence[:1], activations=evidence[1:]
        )
        return Intervention(
            method=InterventionMethod.INJECT_INFO, target=carrier.event_id, message=message,
            applied_at=at, signal=signal,
        )

    raise UnknownFailureClassError(f"No remedy for {cls}")


def _system_event(state: "RunState", signal: FailureSignal, message: str, recipients, at: int) -> Intervention:
    event = Event(
        event_id=state.new_event_id(),
        payload=Payload(
            kind=PayloadKind.SYSTEM,
            problem_id=state.root_problem,
            injected_notes=(message,),
        ),
        policy=DeliveryPolicy.immediate(recipients),
        origin=None,
        generated_at=at,
    )
    return Intervention(
        method=InterventionMethod.CREATE_SYSTEM_EVENT,
        message=message,
        recipients=tuple(sorted(recipients)),
        applied_at=at,
        signal=signal,
        created=event,
    )


def apply_intervention(state: "RunState", intervention: Intervention) -> Optional[Event]:
    """Write the intervention record and update the run; returns the event touched"""
    data = {
        "method": intervention.method.value,
        "target": intervention.target,
        "message": intervention.message,
        "recipients": list(intervention.recipients),
        "signal": intervention.signal.category.value,
        "evidence": list(intervention.signal.evidence),
        "demote_final": False,
    }

    if intervention.method == InterventionMethod.CREATE_SYSTEM_EVENT:
        created = intervention.created
        data["event"] = {
            "event_id": created.event_id,
            "payload": created.payload.envelope(),
            "policy": created.policy.to_list(),
        }
        record = state.recorder.emit(RecordKind.INTERVENTION, data)
        state.add_event(created, base=record.t)
        touched = created
    else:
        event = state.events[intervention.target]
        payload = event.payload.with_note(intervention.message)
        update = {"payload": payload}
        reroute = intervention.method == InterventionMethod.INJECT_AND_REROUTE
        if reroute:
            if payload.is_final_answer:
                data["demote_final"] = True
                update["payload"] = payload.model_copy(update={"is_final_answer": False})
            update["reroute_count"] = event.reroute_count + 1
            update["policy"] = DeliveryPolicy.immediate(intervention.recipients)
        record = state.recorder.emit(RecordKind.INTERVENTION, data)
        touched = event.model_copy(update=update)
        state.events[touched.event_id] = touched
        if reroute:
            state.schedule(touched.event_id, touched.policy, base=record.t, gated=True)

    state.healed.add(intervention.signal.key())
    state.interventions.append(intervention)
    logger.info(
        "intervention_applied",
        method=intervention.method.value,
        signal=intervention.signal.category.value,
        evidence=list(intervention.signal.evidence),
        t=record.t,
    )
    return touched


def _pick(state: "RunState", carrier: Optional[Event]) -> Optional[FailureSignal]:
    allowed = set(state.config.heal_classes)
    fresh = [
        s for s in state.current_signals()
        if s.key() not in state.healed and s.category in allowed
    ]
    for signal in prioritize(state.graph, fresh):
        if _applicable(state.graph, signal, carrier):
            return signal
    return None


def gate_event(state: "RunState", event: Event) -> GateOutcome:
    """Block one event, detect, and release it (possibly modified, possibly with company)"""
    signal = _pick(state, event)
    if signal is None:
        return GateOutcome(kind=GateKind.RELEASE, event=event)

    state.recorder.emit(
        RecordKind.EVENT_BLOCKED,
        {"event_id": event.event_id, "signal": signal.category.value, "evidence": list(signal.evidence)},
    )
    intervention = heal(signal, state.graph, state, carrier=event, at=state.clock.now + 1)
    touched = apply_intervention(state, intervention)

    if touched is not None and touched.event_id == event.event_id:
        return GateOutcome(kind=GateKind.RELEASE_MODIFIED, event=touched, intervention=intervention)
    return GateOutcome(
        kind=GateKind.RELEASE_PLUS,
        event=state.events[event.event_id],
        extra=touched,
        intervention=intervention,
    )


def poll_idle(state: "RunState") -> Optional[GateOutcome]:
    """Idle-time healing for failures that no event will ever carry"""
    signal = _pick(state, None)
    if signal is None:
        return None
    intervention = heal(signal, state.graph, state, at=state.clock.now + 1)
    touched = apply_intervention(state, intervention)
    return GateOutcome(kind=GateKind.RELEASE_PLUS, extra=touched, intervention=intervention)
