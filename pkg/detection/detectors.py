"""
Structural failure detectors

Each detector reads graph structure and thresholds only; payload bodies are
never consulted. Evidence tuples are sorted so signals compare and dedupe
deterministically.
"""
from itertools import combinations
from typing import Iterable, List, Optional

from dig_runtime.schemas import (
    CLASS_ORDER,
    FailureClass,
    FailureSignal,
    ThresholdSet,
    severity_of,
)
from graph.interaction_graph import ActivationClass, InteractionGraph


def _signal(cls: FailureClass, evidence: Iterable[str], t: int) -> FailureSignal:
    return FailureSignal(category=cls, severity=severity_of(cls), evidence=tuple(evidence), detected_at=t)


def detect_et(graph: InteractionGraph, t: int) -> List[FailureSignal]:
    """Final answer exists while reachable work has no path into it"""
    final = graph.final_event()
    if final is None:
        return []
    unresolved = sorted(e for e in graph.reachable_work(t) if not graph.has_path(e, final))
    if not unresolved:
        return []
    return [_signal(FailureClass.ET, unresolved, t)]


def detect_mc(graph: InteractionGraph, t: int, th: ThresholdSet) -> List[FailureSignal]:
    """No reachable work, no final answer, and quiet for a full window"""
    if graph.reachable_work(t) or graph.final_event() is not None:
        return []
    if t - graph.last_activity < th.mc_window:
        return []
    last = graph.last_closed_activation()
    return [_signal(FailureClass.MC, [last] if last else [], t)]


def detect_oe(graph: InteractionGraph, t: int, th: ThresholdSet) -> List[FailureSignal]:
    out = []
    for event in sorted(graph.events.values(), key=lambda e: e.event_id):
        if event.system or event.final or event.generated_at > t:
            continue
        if not graph.is_orphan(event.event_id):
            continue
        if t - event.last_touched >= th.oe_window:
            out.append(_signal(FailureClass.OE, [event.event_id], t))
    return out


def detect_dl(graph: InteractionGraph, t: int, th: ThresholdSet) -> List[FailureSignal]:
    """Reachable work exists but nothing has happened for a full window"""
    reachable = graph.reachable_work(t)
    if not reachable or t - graph.last_activity < th.dl_window:
        return []
    return [_signal(FailureClass.DL, sorted(reachable), t)]


def detect_er(graph: InteractionGraph, t: int, th: ThresholdSet) -> List[FailureSignal]:
    return [
        _signal(FailureClass.ER, [e.event_id], t)
        for e in sorted(graph.events.values(), key=lambda e: e.event_id)
        if e.reroute_count >= th.er_max_reroutes and not e.consumed and e.generated_at <= t
    ]


def detect_cla(graph: InteractionGraph, t: int) -> List[FailureSignal]:
    """Closed activations that consumed events from unrelated lineages"""
    out = []
    for act in sorted(graph.closed_activations(), key=lambda a: a.activation_id):
        inputs = sorted(e for e in graph.consumed_inputs(act.activation_id) if not graph.events[e].system)
        unrelated = set()
        for a, b in combinations(inputs, 2):
            if a in graph.ancestor_events(b) or b in graph.ancestor_events(a):
                continue
            if graph.common_generator(a, b) is None:
                unrelated.update((a, b))
        if unrelated:
            out.append(_signal(FailureClass.CLA, [act.activation_id] + sorted(unrelated), t))
    return out


def detect_rsp(graph: InteractionGraph, t: int) -> List[FailureSignal]:
    """One event consumed by two or more problem-reducing activations"""
    out = []
    for event in sorted(graph.events.values(), key=lambda e: e.event_id):
        if event.system or len(event.consumed_by) < 2:
            continue
        reducers = sorted({
            v for v in event.consumed_by
            if graph.activations[v].closed
            and graph.classify_activation(v) == ActivationClass.REDUCING
        })
        if len(reducers) >= 2:
            out.append(_signal(FailureClass.RSP, [event.event_id] + reducers, t))
    return out


def detect_all(graph: InteractionGraph, t: int, th: Optional[ThresholdSet] = None) -> List[FailureSignal]:
    """All seven detectors, failures before warnings"""
    th = th or ThresholdSet()
    by_class = {
        FailureClass.ET: detect_et(graph, t),
        FailureClass.MC: detect_mc(graph, t, th),
        FailureClass.OE: detect_oe(graph, t, th),
        FailureClass.DL: detect_dl(graph, t, th),
        FailureClass.ER: detect_er(graph, t, th),
        FailureClass.CLA: detect_cla(graph, t),
        FailureClass.RSP: detect_rsp(graph, t),
    }
    signals: List[FailureSignal] = []
    for cls in CLASS_ORDER:
        signals.extend(sorted(by_class[cls], key=lambda s: s.evidence))
    return signals
