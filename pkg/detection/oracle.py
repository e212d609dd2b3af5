"""
Brute-force detection oracle

Re-derives every failure predicate from the raw edge list and node fields
by exhaustive search. Shares no query code with the graph or the
detectors, so agreement between the two is meaningful.
"""
from typing import Dict, List, Optional, Set, Tuple

from dig_runtime.schemas import (
    CLASS_ORDER,
    EdgeAction,
    FailureClass,
    FailureSignal,
    ThresholdSet,
    severity_of,
)
from graph.interaction_graph import InteractionGraph


class _Snapshot:
    def __init__(self, graph: InteractionGraph):
        self.events = {k: v.model_copy(deep=True) for k, v in graph.events.items()}
        self.activations = {k: v.model_copy(deep=True) for k, v in graph.activations.items()}
        self.agents = set(graph.known_agents)
        self.last_activity = graph.last_activity
        self.edges = graph.edge_list()
        self.causal: Dict[str, List[str]] = {}
        self.consumers: Dict[str, List[str]] = {}
        self.consumed_in: Dict[str, int] = {}
        self.generated_out: Dict[str, int] = {}
        for edge in self.edges:
            if edge.kind == "generation":
                self.causal.setdefault(edge.src, []).append(edge.dst)
                self.generated_out[edge.src] = self.generated_out.get(edge.src, 0) + 1
                continue
            if edge.action == EdgeAction.CONSUME:
                self.consumers.setdefault(edge.src, []).append(edge.dst)
                self.consumed_in[edge.dst] = self.consumed_in.get(edge.dst, 0) + 1
                self.causal.setdefault(edge.src, []).append(edge.dst)
            elif edge.action == EdgeAction.PENDING and edge.redirect:
                self.causal.setdefault(edge.src, []).append(edge.dst)
        self._reach: Dict[str, Set[str]] = {}

    def reach(self, src: str) -> Set[str]:
        if src not in self._reach:
            seen = {src}
            stack = [src]
            while stack:
                node = stack.pop()
                for nxt in self.causal.get(node, []):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            self._reach[src] = seen
        return self._reach[src]

    def path(self, x: str, y: str) -> bool:
        return y in self.reach(x)

    def consumed(self, event_id: str) -> bool:
        return bool(self.consumers.get(event_id))

    def orphan(self, event_id: str) -> bool:
        e = self.events[event_id]
        if self.consumed(event_id) or e.held_by:
            return False
        return all(r not in self.agents for r in e.pending_recipients)

    def final(self) -> Optional[str]:
        best: Optional[Tuple[int, str]] = None
        for eid, e in self.events.items():
            if e.final and not self.consumed(eid):
                if best is None or (e.generated_at, eid) > best:
                    best = (e.generated_at, eid)
        return best[1] if best else None

    def reachable(self, t: int) -> Set[str]:
        return {
            eid for eid, e in self.events.items()
            if e.generated_at <= t and not e.system and not e.final
            and not self.consumed(eid) and not self.orphan(eid)
        }

    def reducing(self, activation_id: str) -> bool:
        return self.generated_out.get(activation_id, 0) <= self.consumed_in.get(activation_id, 0)


def _sig(cls: FailureClass, evidence, t: int) -> FailureSignal:
    return FailureSignal(category=cls, severity=severity_of(cls), evidence=tuple(evidence), detected_at=t)


def oracle_detect(graph: InteractionGraph, t: int, th: Optional[ThresholdSet] = None) -> List[FailureSignal]:
    th = th or ThresholdSet()
    s = _Snapshot(graph)
    found: Dict[FailureClass, List[FailureSignal]] = {c: [] for c in CLASS_ORDER}
    reachable = s.reachable(t)
    final = s.final()
    quiet = t - s.last_activity

    if final is not None:
        stuck = sorted(e for e in reachable if not s.path(e, final))
        if stuck:
            found[FailureClass.ET].append(_sig(FailureClass.ET, stuck, t))

    if not reachable and final is None and quiet >= th.mc_window:
        closed = [(a.end, aid) for aid, a in s.activations.items() if a.end is not None]
        found[FailureClass.MC].append(_sig(FailureClass.MC, [max(closed)[1]] if closed else [], t))

    for eid, e in s.events.items():
        if e.generated_at > t or e.system or e.final:
            continue
        if s.orphan(eid) and t - e.last_touched >= th.oe_window:
            found[FailureClass.OE].append(_sig(FailureClass.OE, [eid], t))

    if reachable and quiet >= th.dl_window:
        found[FailureClass.DL].append(_sig(FailureClass.DL, sorted(reachable), t))

    for eid, e in s.events.items():
        if e.generated_at <= t and e.reroute_count >= th.er_max_reroutes and not s.consumed(eid):
            found[FailureClass.ER].append(_sig(FailureClass.ER, [eid], t))

    activation_ids = list(s.activations)
    for aid, act in s.activations.items():
        if act.end is None:
            continue
        inputs = [
            edge.src for edge in s.edges
            if edge.dst == aid and edge.action == EdgeAction.CONSUME and not s.events[edge.src].system
        ]
        bad: Set[str] = set()
        for i, a in enumerate(inputs):
            for b in inputs[i + 1:]:
                if s.path(a, b) or s.path(b, a):
                    continue
                if not any(s.path(g, a) and s.path(g, b) for g in activation_ids):
                    bad.update((a, b))
        if bad:
            found[FailureClass.CLA].append(_sig(FailureClass.CLA, [aid] + sorted(bad), t))

    for eid, e in s.events.items():
        if e.system:
            continue
        reducers = sorted({
            v for v in s.consumers.get(eid, [])
            if s.activations[v].end is not None and s.reducing(v)
        })
        if len(reducers) >= 2:
            found[FailureClass.RSP].append(_sig(FailureClass.RSP, [eid] + reducers, t))

    out: List[FailureSignal] = []
    for cls in CLASS_ORDER:
        out.extend(sorted(found[cls], key=lambda sig: sig.evidence))
    return out
