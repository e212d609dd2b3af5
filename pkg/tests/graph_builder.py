"""
Hand construction of interaction graphs for detector and graph tests
"""
from typing import Dict, Iterable, List, Optional, Sequence

from dig_runtime.schemas import Action, EdgeAction
from graph.interaction_graph import InteractionGraph


def envelope(kind: str = "raw_data", final: bool = False, coverage: Optional[List[List[int]]] = None) -> Dict:
    return {
        "kind": kind,
        "problem_id": "p0",
        "coverage": coverage or [],
        "is_final_answer": final,
        "notes": [],
        "body_digest": "",
        "body_size": 0,
    }


class GraphBuilder:
    """Drives an InteractionGraph one tick per operation, like the scheduler does"""

    def __init__(self, agents: Sequence[str] = ("a1", "a2", "a3"), strict: bool = True):
        self.graph = InteractionGraph(strict=strict)
        self.graph.known_agents = list(agents)
        self.t = 0
        self._activations = 0

    def tick(self) -> int:
        self.t += 1
        self.graph.last_activity = self.t
        return self.t

    def root(self, recipients: Iterable[str] = ("a1",), coverage=None) -> str:
        self.graph.record_generation(
            "e0", None, 0, envelope("problem", coverage=coverage or [[0, 4]]), recipients=[]
        )
        for agent in recipients:
            self.graph.record_delivery("e0", agent, 0)
        return "e0"

    def activate(self, agent: str, inputs: Iterable[str]) -> str:
        self._activations += 1
        activation_id = f"v{self._activations}"
        at = self.tick()
        pairs = []
        for event_id in inputs:
            receipts = [r for a, r in self.graph.events[event_id].receipts if a == agent]
            pairs.append((event_id, max(receipts)))
        self.graph.record_activation(activation_id, agent, at, pairs)
        return activation_id

    def act(
        self,
        activation_id: str,
        consume: Iterable[str] = (),
        delay: Iterable[str] = (),
        discard: Iterable[str] = (),
        reroute: Optional[Dict[str, List[str]]] = None,
    ) -> None:
        labeling = {}
        for event_id in consume:
            labeling[event_id] = Action(action=EdgeAction.CONSUME)
        for event_id in delay:
            labeling[event_id] = Action(action=EdgeAction.DELAY)
        for event_id in discard:
            labeling[event_id] = Action(action=EdgeAction.DISCARD)
        for event_id, targets in (reroute or {}).items():
            labeling[event_id] = Action(action=EdgeAction.REROUTE, targets=tuple(targets))
        self.graph.apply_edge_actions(activation_id, labeling, self.tick())

    def emit(
        self,
        activation_id: str,
        event_id: str,
        to: Iterable[str] = (),
        kind: str = "raw_data",
        final: bool = False,
        coverage=None,
    ) -> str:
        self.graph.record_generation(
            event_id, activation_id, self.tick(), envelope(kind, final, coverage), recipients=list(to)
        )
        return event_id

    def close(self, activation_id: str) -> None:
        self.graph.close_activation(activation_id, self.tick())

    def deliver(self, event_id: str, *agents: str) -> None:
        at = self.tick()
        for agent in agents:
            self.graph.record_delivery(event_id, agent, at)

    def drop(self, event_id: str, *agents: str) -> None:
        self.graph.record_dropped(event_id, agents, self.tick())

    def idle(self, ticks: int) -> int:
        """Advance time without activity"""
        self.t += ticks
        return self.t


def build_s3() -> GraphBuilder:
    """Honest three-agent split / solve / aggregate, completed"""
    b = GraphBuilder()
    b.root(["a1"])
    v1 = b.activate("a1", ["e0"])
    b.act(v1, consume=["e0"])
    b.emit(v1, "e1", to=["a2"], coverage=[[0, 2]])
    b.emit(v1, "e2", to=["a3"], coverage=[[2, 4]])
    b.close(v1)
    b.deliver("e1", "a2")
    b.deliver("e2", "a3")
    v2 = b.activate("a2", ["e1"])
    b.act(v2, consume=["e1"])
    b.emit(v2, "e3", to=["a1"], kind="solution", coverage=[[0, 2]])
    b.close(v2)
    v3 = b.activate("a3", ["e2"])
    b.act(v3, consume=["e2"])
    b.emit(v3, "e4", to=["a1"], kind="solution", coverage=[[2, 4]])
    b.close(v3)
    b.deliver("e3", "a1")
    b.deliver("e4", "a1")
    v4 = b.activate("a1", ["e3", "e4"])
    b.act(v4, consume=["e3", "e4"])
    b.emit(v4, "e5", kind="solution", final=True, coverage=[[0, 4]])
    b.close(v4)
    return b


def build_premature() -> GraphBuilder:
    """a2 submits its half while a3 still holds the other one"""
    b = GraphBuilder()
    b.root(["a1"])
    v1 = b.activate("a1", ["e0"])
    b.act(v1, consume=["e0"])
    b.emit(v1, "e1", to=["a2"], coverage=[[0, 2]])
    b.emit(v1, "e2", to=["a3"], coverage=[[2, 4]])
    b.close(v1)
    b.deliver("e1", "a2")
    b.deliver("e2", "a3")
    v2 = b.activate("a2", ["e1"])
    b.act(v2, consume=["e1"])
    b.emit(v2, "e3", kind="solution", final=True, coverage=[[0, 2]])
    b.close(v2)
    return b


def build_twins() -> GraphBuilder:
    """a1 and a2 both solve the root on their own; a3 merges the results"""
    b = GraphBuilder()
    b.root(["a1", "a2"])
    for agent, out in (("a1", "e1"), ("a2", "e2")):
        v = b.activate(agent, ["e0"])
        b.act(v, consume=["e0"])
        b.emit(v, out, to=["a3"], kind="solution")
        b.close(v)
    b.deliver("e1", "a3")
    b.deliver("e2", "a3")
    v3 = b.activate("a3", ["e1", "e2"])
    b.act(v3, consume=["e1", "e2"])
    b.emit(v3, "e3", kind="solution", final=True, coverage=[[0, 4]])
    b.close(v3)
    return b
