"""
Dynamic Interaction Graph

Time-indexed bipartite causal graph of activations and events. Generation
edges run activation -> event, delivery edges event -> activation and carry
an edge-action label. Nodes are never removed; discard and reroute are
labels so the full causal record survives for detection and audit.
"""
import hashlib
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

import networkx as nx
from pydantic import BaseModel, Field

from dig_runtime.exceptions import (
    DecisionError,
    GraphInvariantError,
    OverlappingActivationError,
    UnknownNodeError,
)
from dig_runtime.schemas import (
    Action,
    Attribution,
    EdgeAction,
    InterventionMethod,
    PayloadKind,
    RecordKind,
    TraceRecord,
    VIRTUAL_ROOT,
)
from dig_runtime.utils.logging import get_logger

logger = get_logger(__name__)

ACTIVATION = "activation"
EVENT = "event"
GENERATION = "generation"
DELIVERY = "delivery"

# record kinds that count as interaction for the quiescence windows
_ACTIVITY_KINDS = {
    RecordKind.RUN_META,
    RecordKind.ACTIVATION_START,
    RecordKind.ACTIVATION_END,
    RecordKind.DECISION,
    RecordKind.EVENT_GENERATED,
    RecordKind.EVENT_DELIVERED,
}


class ActivationClass(str, Enum):
    GENERATING = "generating"
    REDUCING = "reducing"


class ActivationNode(BaseModel):
    activation_id: str
    agent: str
    start: int
    end: Optional[int] = None
    inputs: List[str] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)

    @property
    def closed(self) -> bool:
        return self.end is not None


class EventNode(BaseModel):
    event_id: str
    generated_at: int
    origin: Optional[str] = Field(default=None, description="Activation id; None means virtual root")
    kind: PayloadKind
    problem_id: str = ""
    coverage: List[List[int]] = Field(default_factory=list)
    body_digest: str = ""
    final: bool = False
    system: bool = False
    reroute_count: int = 0
    pending_recipients: List[str] = Field(default_factory=list)
    held_by: List[str] = Field(default_factory=list)
    receipts: List[Tuple[str, int]] = Field(default_factory=list)
    consumed_by: List[str] = Field(default_factory=list)
    redirect_to: List[str] = Field(default_factory=list)
    notes: int = 0
    last_touched: int = 0

    @property
    def consumed(self) -> bool:
        return bool(self.consumed_by)


class EdgeView(BaseModel):
    """Flat copy of one edge for exporters and the oracle"""
    src: str
    dst: str
    kind: str
    t: int
    action: Optional[EdgeAction] = None
    redirect: bool = False
    received_at: Optional[int] = None
    attribution: Optional[Attribution] = None


def edge_attribution(action: EdgeAction, redirect: bool) -> Attribution:
    if action == EdgeAction.CONSUME:
        return Attribution.PRODUCTIVE
    if action == EdgeAction.PENDING:
        return Attribution.PRODUCTIVE if redirect else Attribution.PENDING
    return Attribution.NON_PRODUCTIVE


def _transmits(data: Dict[str, Any]) -> bool:
    if data["kind"] == GENERATION:
        return True
    action = data["action"]
    return action == EdgeAction.CONSUME or (action == EdgeAction.PENDING and data["redirect"])


class InteractionGraph:
    """Labeled DIG backed by a networkx DiGraph"""

    def __init__(self, strict: bool = False):
        self._g = nx.DiGraph()
        self.activations: Dict[str, ActivationNode] = {}
        self.events: Dict[str, EventNode] = {}
        self.known_agents: List[str] = []
        self.last_activity: int = 0
        self.submitted: Optional[str] = None
        self.insertion_log: List[Tuple[int, str, str]] = []
        self._open: Dict[str, str] = {}
        self._anc_acts: Dict[str, FrozenSet[str]] = {}
        self._anc_events: Dict[str, FrozenSet[str]] = {}
        self._strict = strict

    # ------------------------------------------------------------ record dispatch

    def apply(self, record: TraceRecord) -> None:
        """Fold one trace record into the graph (shared by online runs and replay)"""
        handler = getattr(self, f"_apply_{record.kind.value}")
        handler(record.t, record.data)
        if record.kind in _ACTIVITY_KINDS:
            self.last_activity = record.t
        if self._strict:
            self.check_invariants()

    def _apply_run_meta(self, t: int, data: Dict[str, Any]) -> None:
        self.known_agents = list(data["agents"])
        root = data["root"]
        self.record_generation(
            root["event_id"], None, t, root["payload"], recipients=[], system=False
        )
        for agent in data["initial_recipients"]:
            self.record_delivery(root["event_id"], agent, t)

    def _apply_activation_start(self, t: int, data: Dict[str, Any]) -> None:
        self.record_activation(
            data["activation"], data["agent"], t, [(eid, at) for eid, at in data["inputs"]]
        )

    def _apply_decision(self, t: int, data: Dict[str, Any]) -> None:
        labeling = {
            a["event_id"]: Action(action=EdgeAction(a["action"]), targets=tuple(a.get("targets", ())))
            for a in data["actions"]
        }
        self.apply_edge_actions(data["activation"], labeling, t)

    def _apply_event_generated(self, t: int, data: Dict[str, Any]) -> None:
        recipients = [r for _, wave in data["policy"] for r in wave]
        self.record_generation(data["event_id"], data["origin"], t, data["payload"], recipients)

    def _apply_event_delivered(self, t: int, data: Dict[str, Any]) -> None:
        event_id = data["event_id"]
        for agent in data["recipients"]:
            self.record_delivery(event_id, agent, t)
        self.record_dropped(event_id, data.get("dropped", []), t)

    def _apply_activation_end(self, t: int, data: Dict[str, Any]) -> None:
        self.close_activation(data["activation"], t)

    def _apply_event_blocked(self, t: int, data: Dict[str, Any]) -> None:
        self._require_event(data["event_id"])

    def _apply_intervention(self, t: int, data: Dict[str, Any]) -> None:
        method = InterventionMethod(data["method"])
        if method == InterventionMethod.CREATE_SYSTEM_EVENT:
            created = data["event"]
            self.record_generation(
                created["event_id"], None, t, created["payload"],
                recipients=list(data["recipients"]), system=True,
            )
            return
        node = self._require_event(data["target"])
        node.notes += 1
        node.last_touched = t
        if method == InterventionMethod.INJECT_AND_REROUTE:
            node.pending_recipients = sorted(data["recipients"])
            node.redirect_to = sorted(data["recipients"])
            node.reroute_count += 1
            if data.get("demote_final"):
                node.final = False

    def _apply_submit(self, t: int, data: Dict[str, Any]) -> None:
        self._require_event(data["event_id"])
        self.submitted = data["event_id"]

    def _apply_run_end(self, t: int, data: Dict[str, Any]) -> None:
        pass

    # ------------------------------------------------------------ rewrite operations

    def record_activation(
        self,
        activation_id: str,
        agent: str,
        start: int,
        inputs: Iterable[Tuple[str, int]] = (),
    ) -> str:
        if agent in self._open:
            raise OverlappingActivationError(
                f"Agent {agent} already active in {self._open[agent]}"
            )
        if activation_id in self._g:
            raise GraphInvariantError(f"Duplicate node id {activation_id}")

        node = ActivationNode(activation_id=activation_id, agent=agent, start=start)
        self.activations[activation_id] = node
        self._g.add_node(activation_id, kind=ACTIVATION)
        self._open[agent] = activation_id
        self.insertion_log.append((start, ACTIVATION, activation_id))

        for event_id, received_at in inputs:
            event = self._require_event(event_id)
            if received_at < event.generated_at or received_at > start:
                raise GraphInvariantError(
                    f"Delivery of {event_id} at {received_at} outside [{event.generated_at}, {start}]"
                )
            redirect = agent in event.redirect_to
            if redirect:
                event.redirect_to.remove(agent)
            self._g.add_edge(
                event_id, activation_id,
                kind=DELIVERY, t=start, received_at=received_at,
                action=EdgeAction.PENDING, redirect=redirect,
            )
            node.inputs.append(event_id)
            self.insertion_log.append((start, DELIVERY, f"{event_id}>{activation_id}"))
        return activation_id

    def close_activation(self, activation_id: str, end: int) -> None:
        node = self._require_activation(activation_id)
        if node.end is not None:
            raise GraphInvariantError(f"Activation {activation_id} already closed")
        if end < node.start:
            raise GraphInvariantError(f"Activation {activation_id} ends before it starts")
        node.end = end
        self._open.pop(node.agent, None)

    def record_generation(
        self,
        event_id: str,
        origin: Optional[str],
        at: int,
        envelope: Dict[str, Any],
        recipients: List[str],
        system: bool = False,
    ) -> None:
        if event_id in self._g:
            raise GraphInvariantError(f"Duplicate node id {event_id}")
        acts: Set[str] = set()
        ancestors: Set[str] = set()
        if origin is not None:
            parent = self._require_activation(origin)
            if at < parent.start:
                raise GraphInvariantError(f"Event {event_id} generated before {origin} started")
            acts.add(origin)
            for src in self.consumed_inputs(origin):
                acts |= self._anc_acts[src]
                ancestors.add(src)
                ancestors |= self._anc_events[src]
            parent.outputs.append(event_id)

        self.events[event_id] = EventNode(
            event_id=event_id,
            generated_at=at,
            origin=origin,
            kind=PayloadKind(envelope["kind"]),
            problem_id=envelope.get("problem_id", ""),
            coverage=[list(r) for r in envelope.get("coverage", [])],
            body_digest=envelope.get("body_digest", ""),
            final=bool(envelope.get("is_final_answer", False)),
            system=system,
            pending_recipients=sorted(recipients),
            last_touched=at,
        )
        self._anc_acts[event_id] = frozenset(acts)
        self._anc_events[event_id] = frozenset(ancestors)
        self._g.add_node(event_id, kind=EVENT)
        self.insertion_log.append((at, EVENT, event_id))
        if origin is not None:
            self._g.add_edge(origin, event_id, kind=GENERATION, t=at)
            self.insertion_log.append((at, GENERATION, f"{origin}>{event_id}"))

    def record_delivery(self, event_id: str, agent: str, at: int) -> None:
        event = self._require_event(event_id)
        if at < event.generated_at:
            raise GraphInvariantError(
                f"Delivery of {event_id} at {at} precedes its generation at {event.generated_at}"
            )
        if agent in event.pending_recipients:
            event.pending_recipients.remove(agent)
        if agent not in event.held_by:
            event.held_by.append(agent)
            event.held_by.sort()
        event.receipts.append((agent, at))
        event.last_touched = at

    def record_dropped(self, event_id: str, agents: Iterable[str], at: int) -> None:
        event = self._require_event(event_id)
        for agent in agents:
            if agent in event.pending_recipients:
                event.pending_recipients.remove(agent)
            event.last_touched = at

    def apply_edge_actions(self, activation_id: str, labeling: Dict[str, Action], at: int) -> None:
        node = self._require_activation(activation_id)
        pending = {
            src for src, _, data in self._g.in_edges(activation_id, data=True)
            if data["action"] == EdgeAction.PENDING
        }
        if set(labeling) != pending:
            raise DecisionError(
                f"Labeling for {activation_id} covers {sorted(labeling)}, pending edges are {sorted(pending)}"
            )

        for event_id, action in labeling.items():
            if action.action == EdgeAction.PENDING:
                raise DecisionError(f"Edge {event_id}>{activation_id} left pending")
            self._g.edges[event_id, activation_id]["action"] = action.action
            event = self.events[event_id]
            event.last_touched = at
            if action.action == EdgeAction.DELAY:
                continue
            if node.agent in event.held_by:
                event.held_by.remove(node.agent)
            if action.action == EdgeAction.CONSUME:
                event.consumed_by.append(activation_id)
            elif action.action == EdgeAction.REROUTE:
                event.pending_recipients = sorted(action.targets)
                event.redirect_to = sorted(action.targets)
                event.reroute_count += 1

    # ------------------------------------------------------------ queries

    def has_path(self, x: str, y: str) -> bool:
        """Directed path over causality-transmitting edges"""
        if x not in self._g:
            raise UnknownNodeError(x)
        if y not in self._g:
            raise UnknownNodeError(y)
        view = nx.subgraph_view(self._g, filter_edge=lambda u, v: _transmits(self._g.edges[u, v]))
        return nx.has_path(view, x, y)

    def is_orphan(self, event_id: str) -> bool:
        event = self._require_event(event_id)
        if event.consumed or event.held_by:
            return False
        return not any(r in self.known_agents for r in event.pending_recipients)

    def final_event(self) -> Optional[str]:
        """Latest unconsumed event flagged as final answer"""
        candidates = [e for e in self.events.values() if e.final and not e.consumed]
        if not candidates:
            return None
        return max(candidates, key=lambda e: (e.generated_at, e.event_id)).event_id

    def reachable_work(self, t: Optional[int] = None) -> Set[str]:
        """Open events: unconsumed, not orphaned, not the terminal event"""
        out = set()
        for e in self.events.values():
            if t is not None and e.generated_at > t:
                continue
            if e.system or e.final or e.consumed:
                continue
            if self.is_orphan(e.event_id):
                continue
            out.add(e.event_id)
        return out

    def consumed_inputs(self, activation_id: str) -> List[str]:
        return [
            src for src, _, data in self._g.in_edges(activation_id, data=True)
            if data["action"] == EdgeAction.CONSUME
        ]

    def classify_activation(self, activation_id: str) -> ActivationClass:
        self._require_activation(activation_id)
        n_in = len(self.consumed_inputs(activation_id))
        n_out = self._g.out_degree(activation_id)
        return ActivationClass.GENERATING if n_out > n_in else ActivationClass.REDUCING

    def ancestor_events(self, event_id: str) -> FrozenSet[str]:
        self._require_event(event_id)
        return self._anc_events[event_id]

    def common_generator(self, e1: str, e2: str, exclude_virtual_root: bool = True) -> Optional[str]:
        """Latest real activation with a causal path to both events"""
        self._require_event(e1)
        self._require_event(e2)
        shared = self._anc_acts[e1] & self._anc_acts[e2]
        if not shared:
            if exclude_virtual_root:
                return None
            both_rooted = not (self.events[e1].system or self.events[e2].system)
            return VIRTUAL_ROOT if both_rooted else None
        return max(shared, key=lambda a: (self.activations[a].start, a))

    def closed_activations(self) -> List[ActivationNode]:
        return [a for a in self.activations.values() if a.closed]

    def last_closed_activation(self) -> Optional[str]:
        closed = self.closed_activations()
        if not closed:
            return None
        return max(closed, key=lambda a: (a.end, a.activation_id)).activation_id

    def node_time(self, node_id: str) -> int:
        if node_id in self.events:
            return self.events[node_id].generated_at
        if node_id in self.activations:
            return self.activations[node_id].start
        raise UnknownNodeError(node_id)

    def agent_of(self, activation_id: str) -> str:
        return self._require_activation(activation_id).agent

    def edge_list(self) -> List[EdgeView]:
        out = []
        for u, v, data in self._g.edges(data=True):
            if data["kind"] == GENERATION:
                out.append(EdgeView(src=u, dst=v, kind=GENERATION, t=data["t"]))
            else:
                out.append(EdgeView(
                    src=u, dst=v, kind=DELIVERY, t=data["t"],
                    action=data["action"], redirect=data["redirect"],
                    received_at=data["received_at"],
                    attribution=edge_attribution(data["action"], data["redirect"]),
                ))
        out.sort(key=lambda e: (e.t, e.src, e.dst))
        return out

    def stats(self) -> Dict[str, int]:
        edges = self.edge_list()
        deliveries = [e for e in edges if e.kind == DELIVERY]
        return {
            "activations": len(self.activations),
            "events": len(self.events),
            "nodes": self._g.number_of_nodes(),
            "generation_edges": len(edges) - len(deliveries),
            "delivery_edges": len(deliveries),
            "productive_edges": sum(1 for e in deliveries if e.attribution == Attribution.PRODUCTIVE),
            "non_productive_edges": sum(1 for e in deliveries if e.attribution == Attribution.NON_PRODUCTIVE),
        }

    def fingerprint(self) -> str:
        return fingerprint(self)

    # ------------------------------------------------------------ invariants

    def check_invariants(self) -> None:
        for u, v, data in self._g.edges(data=True):
            ku, kv = self._g.nodes[u]["kind"], self._g.nodes[v]["kind"]
            if ku == kv:
                raise GraphInvariantError(f"Edge {u}>{v} joins two {ku} nodes")
            if data["kind"] == GENERATION:
                if ku != ACTIVATION or self.activations[u].start > data["t"]:
                    raise GraphInvariantError(f"Generation edge {u}>{v} out of order")
            else:
                if ku != EVENT or self.events[u].generated_at > data["received_at"]:
                    raise GraphInvariantError(f"Delivery edge {u}>{v} out of order")
                if data["received_at"] > self.activations[v].start:
                    raise GraphInvariantError(f"Delivery edge {u}>{v} received after activation start")

        for event in self.events.values():
            gen_in = [
                u for u, _, d in self._g.in_edges(event.event_id, data=True) if d["kind"] == GENERATION
            ]
            expected = 0 if event.origin is None else 1
            if len(gen_in) != expected:
                raise GraphInvariantError(
                    f"Event {event.event_id} has {len(gen_in)} generation edges, expected {expected}"
                )

        if not nx.is_directed_acyclic_graph(self._g):
            raise GraphInvariantError("Interaction graph contains a cycle")

    # ------------------------------------------------------------ helpers

    def _require_event(self, event_id: str) -> EventNode:
        try:
            return self.events[event_id]
        except KeyError:
            raise UnknownNodeError(event_id)

    def _require_activation(self, activation_id: str) -> ActivationNode:
        try:
            return self.activations[activation_id]
        except KeyError:
            raise UnknownNodeError(activation_id)


def canonical_lines(graph: InteractionGraph) -> List[str]:
    """
    Documented byte format of the labeled time-indexed graph.

    One record per line, space separated, integers in decimal:
        A <start> <id> <agent> <end|->
        E <generated_at> <id> <origin|root> <kind> <final> <system> <reroutes> <body_digest>
        G <t> <activation> <event>
        D <t> <event> <activation> <action> <attribution> <redirect>
    Node lines sort by (time, kind, id), edge lines by (time, endpoints, label).
    """
    nodes = []
    for a in graph.activations.values():
        end = "-" if a.end is None else str(a.end)
        nodes.append(((a.start, "A", a.activation_id), f"A {a.start} {a.activation_id} {a.agent} {end}"))
    for e in graph.events.values():
        origin = e.origin or VIRTUAL_ROOT
        nodes.append((
            (e.generated_at, "E", e.event_id),
            f"E {e.generated_at} {e.event_id} {origin} {e.kind.value} {int(e.final)} "
            f"{int(e.system)} {e.reroute_count} {e.body_digest}",
        ))
    edges = []
    for edge in graph.edge_list():
        if edge.kind == GENERATION:
            edges.append(((edge.t, edge.src, edge.dst, ""), f"G {edge.t} {edge.src} {edge.dst}"))
        else:
            label = edge.action.value
            edges.append((
                (edge.t, edge.src, edge.dst, label),
                f"D {edge.t} {edge.src} {edge.dst} {label} {edge.attribution.value} {int(edge.redirect)}",
            ))
    nodes.sort(key=lambda item: item[0])
    edges.sort(key=lambda item: item[0])
    return [line for _, line in nodes] + [line for _, line in edges]


def fingerprint(graph: InteractionGraph) -> str:
    payload = "\n".join(canonical_lines(graph)).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()
