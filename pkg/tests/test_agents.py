"""
Tests for agent policies, the decision builder and healing notes
"""
import json
import math
import random

import pytest

from agents import notes
from agents.base import (
    AgentPolicy,
    DecisionBuilder,
    PolicyContext,
    available_policies,
    decide,
    register_policy,
    resolve_policy,
)
from agents.honest import read_counts, solution_payload
from dig_runtime.exceptions import ConfigError, DecisionError
from dig_runtime.schemas import (
    CoverageRange,
    EdgeAction,
    Event,
    Payload,
    PayloadKind,
    PolicySpec,
)

ITEMS = ["a", "b", "a", "c"]
AGENTS = ("a1", "a2", "a3")


def rng_of(start, end):
    return CoverageRange(start=start, end=end)


def make_ctx(agent="a1", agents=AGENTS, aggregator="a1", memory=None, params=None, seed=0, items=ITEMS):
    return PolicyContext(
        self_id=agent,
        peers=tuple(a for a in agents if a != agent),
        agents=tuple(agents),
        aggregator=aggregator,
        root=rng_of(0, len(items)),
        root_problem="p0",
        chunk=max(1, math.ceil(len(items) / len(agents))),
        fanout=2,
        rng=random.Random(seed),
        memory=dict(memory or {}),
        params=dict(params or {}),
        fetch=lambda s, e: items[s:e],
    )


def event(event_id, payload, reroutes=0):
    return Event(event_id=event_id, payload=payload, generated_at=1, origin="v1", reroute_count=reroutes)


def problem(coverage=(0, 4)):
    return Payload(kind=PayloadKind.PROBLEM, problem_id="p0", coverage=(rng_of(*coverage),))


def raw(start, end, items=ITEMS):
    body = json.dumps({"items": items[start:end]}).encode("utf-8")
    return Payload(kind=PayloadKind.RAW_DATA, problem_id="p0.0", body=body, coverage=(rng_of(start, end),))


def solution(start, end, counts, note=None):
    payload = solution_payload("p0.0", (rng_of(start, end),), counts)
    return payload.with_note(note) if note else payload


def system(note):
    return Payload(kind=PayloadKind.SYSTEM, problem_id="p0", injected_notes=(note,))


def run_policy(name, ctx, *events, **params):
    policy = resolve_policy(PolicySpec(name=name, params=params))
    return policy.decide(ctx, [(e, 1) for e in events])


class TestHonestPolicy:
    """Tests for the split / solve / aggregate pipeline"""

    def test_splits_root_into_raw_parts(self):
        decision = run_policy("honest", make_ctx(), event("e0", problem()))
        assert decision.actions["e0"].action == EdgeAction.CONSUME
        assert [o.payload.kind for o in decision.outputs] == [PayloadKind.RAW_DATA, PayloadKind.RAW_DATA]
        assert [o.policy.recipients() for o in decision.outputs] == [["a2"], ["a3"]]
        assert [o.payload.coverage for o in decision.outputs] == [(rng_of(0, 2),), (rng_of(2, 4),)]
        assert not decision.submit

    def test_single_agent_solves_locally(self):
        decision = run_policy("honest", make_ctx(agents=("a1",)), event("e0", problem()))
        assert len(decision.outputs) == 1
        assert decision.outputs[0].payload.kind == PayloadKind.RAW_DATA
        assert decision.outputs[0].policy.recipients() == ["a1"]

    def test_solver_sends_counts_to_aggregator(self):
        decision = run_policy("honest", make_ctx(agent="a2"), event("e1", raw(0, 2)))
        out = decision.outputs[0]
        assert out.payload.kind == PayloadKind.SOLUTION
        assert out.policy.recipients() == ["a1"]
        assert read_counts(out.payload) == {"a": 1, "b": 1}

    def test_aggregator_submits_when_covered(self):
        decision = run_policy(
            "honest", make_ctx(),
            event("e3", solution(0, 2, {"a": 1, "b": 1})),
            event("e4", solution(2, 4, {"a": 1, "c": 1})),
        )
        assert decision.submit
        final = decision.outputs[0]
        assert final.payload.is_final_answer
        assert final.policy.exhausted
        assert read_counts(final.payload) == {"a": 2, "b": 1, "c": 1}
        assert decision.memory["submitted"] is True

    def test_aggregator_holds_below_min_batch(self):
        decision = run_policy("honest", make_ctx(), event("e3", solution(0, 2, {"a": 1})), min_batch=2)
        assert decision.actions["e3"].action == EdgeAction.DELAY
        assert decision.outputs == []

    def test_noted_solution_counts_toward_batch(self):
        note = notes.format_note(notes.OVERLAP, signal="RSP", events=["e0"], activations=["v1", "v2"])
        decision = run_policy(
            "honest", make_ctx(),
            event("e1", solution(0, 2, {"a": 1, "b": 1})),
            event("e2", solution(2, 4, {"a": 1, "c": 1}, note=note)),
            min_batch=2,
        )
        assert {a.action for a in decision.actions.values()} == {EdgeAction.CONSUME}
        assert decision.submit
        assert read_counts(decision.outputs[0].payload) == {"a": 2, "b": 1, "c": 1}

    @pytest.mark.parametrize("kind", [notes.STALLED, notes.EXHAUSTED])
    def test_system_broadcast_releases_held_solution(self, kind):
        note = notes.format_note(kind, signal="DL", events=["e1"])
        decision = run_policy(
            "honest", make_ctx(),
            event("e1", solution(0, 2, {"a": 1, "b": 1})),
            event("e9", system(note)),
            min_batch=2,
        )
        assert decision.actions["e1"].action == EdgeAction.CONSUME
        assert decision.actions["e9"].action == EdgeAction.CONSUME
        assert decision.memory["coverage"] == [[0, 2]]

    def test_unresolved_solution_does_not_fill_batch(self):
        note = notes.format_note(notes.UNRESOLVED, signal="ET", events=["e2"])
        decision = run_policy(
            "honest", make_ctx(),
            event("e1", solution(0, 2, {"a": 1, "b": 1})),
            event("e3", solution(2, 4, {"a": 1, "c": 1}, note=note)),
            min_batch=2,
        )
        assert decision.actions["e1"].action == EdgeAction.DELAY

    def test_aggregator_ignores_overlapping_solution(self):
        ctx = make_ctx(memory={"coverage": [[0, 2]], "counts": {"a": 1, "b": 1}})
        decision = run_policy("honest", ctx, event("e7", solution(0, 2, {"a": 1, "b": 1})))
        assert decision.actions["e7"].action == EdgeAction.CONSUME
        assert decision.memory is None
        assert not decision.submit

    def test_non_aggregator_forwards_solution(self):
        decision = run_policy("honest", make_ctx(agent="a2"), event("e3", solution(0, 2, {"a": 1})))
        assert decision.actions["e3"].action == EdgeAction.REROUTE
        assert decision.actions["e3"].targets == ("a1",)

    def test_exhausted_note_forces_partial_submit(self):
        ctx = make_ctx(memory={"coverage": [[0, 2]], "counts": {"a": 1, "b": 1}})
        note = notes.format_note(notes.EXHAUSTED, signal="MC")
        decision = run_policy("honest", ctx, event("e9", system(note)))
        assert decision.actions["e9"].action == EdgeAction.CONSUME
        assert decision.submit
        assert decision.outputs[0].payload.coverage == (rng_of(0, 2),)

    def test_unresolved_final_goes_to_aggregator(self):
        note = notes.format_note(notes.UNRESOLVED, signal="ET", events=["e2"])
        final = solution_payload("p0.0", (rng_of(0, 2),), {"a": 1}, final=True).with_note(note)
        decision = run_policy("honest", make_ctx(agent="a2"), event("e3", final))
        assert decision.actions["e3"].action == EdgeAction.CONSUME
        out = decision.outputs[0]
        assert not out.payload.is_final_answer
        assert out.policy.recipients() == ["a1"]
        assert not decision.submit

    def test_orphaned_note_reroutes_to_aggregator(self):
        note = notes.format_note(notes.ORPHANED, signal="OE", events=["e2"])
        decision = run_policy("honest", make_ctx(agent="a2"), event("e2", solution(0, 2, {"a": 1}, note=note)))
        assert decision.actions["e2"].targets == ("a1",)


class TestFaultPolicies:
    """Tests for the fault-injection catalog"""

    def test_premature_submitter(self):
        decision = run_policy("premature-submitter", make_ctx(agent="a2"), event("e1", raw(0, 2)))
        assert decision.submit
        assert decision.outputs[0].payload.is_final_answer
        assert decision.outputs[0].payload.coverage == (rng_of(0, 2),)

    def test_premature_submitter_obeys_notes(self):
        note = notes.format_note(notes.STALLED, signal="DL")
        decision = run_policy("premature-submitter", make_ctx(agent="a2"), event("e1", raw(0, 2).with_note(note)))
        assert not decision.submit
        assert decision.outputs[0].policy.recipients() == ["a1"]

    def test_silent_waiter_delays(self):
        decision = run_policy("silent-waiter", make_ctx(agent="a2"), event("e1", raw(0, 2)))
        assert decision.actions["e1"].action == EdgeAction.DELAY
        assert decision.outputs == []

    def test_silent_waiter_wakes_on_system_event(self):
        note = notes.format_note(notes.STALLED, signal="DL", events=["e1"])
        decision = run_policy(
            "silent-waiter", make_ctx(agent="a2"), event("e1", raw(0, 2)), event("e5", system(note))
        )
        assert decision.actions["e1"].action == EdgeAction.CONSUME
        assert decision.actions["e5"].action == EdgeAction.CONSUME
        assert decision.outputs[0].policy.recipients() == ["a1"]

    def test_non_submitter_holds_complete_answer(self):
        decision = run_policy(
            "non-submitter", make_ctx(),
            event("e3", solution(0, 2, {"a": 1, "b": 1})),
            event("e4", solution(2, 4, {"a": 1, "c": 1})),
        )
        assert not decision.submit
        assert decision.memory["coverage"] == [[0, 4]]

    def test_non_submitter_submits_when_exhausted(self):
        ctx = make_ctx(memory={"coverage": [[0, 4]], "counts": {"a": 2}})
        note = notes.format_note(notes.EXHAUSTED, signal="MC")
        decision = run_policy("non-submitter", ctx, event("e9", system(note)))
        assert decision.submit

    def test_void_router(self):
        decision = run_policy("void-router", make_ctx(agent="a2"), event("e1", raw(0, 2)))
        assert decision.outputs[0].policy.recipients() == ["void"]

    def test_hot_potato_skips_aggregator(self):
        decision = run_policy("hot-potato", make_ctx(agent="a2"), event("e1", raw(0, 2)))
        assert decision.actions["e1"].action == EdgeAction.REROUTE
        assert decision.actions["e1"].targets == ("a3",)

    def test_twin_splitter_takes_its_half(self):
        ctx = make_ctx(agent="a2", aggregator="a3")
        decision = run_policy("twin-splitter", ctx, event("e0", problem()), half=1)
        out = decision.outputs[0]
        assert out.payload.kind == PayloadKind.SOLUTION
        assert out.payload.coverage == (rng_of(2, 4),)
        assert out.policy.recipients() == ["a3"]
        assert read_counts(out.payload) == {"a": 1, "c": 1}

    def test_eager_duplicator_multicasts(self):
        decision = run_policy("eager-duplicator", make_ctx(), event("e0", problem()))
        assert len(decision.outputs) == 1
        assert decision.outputs[0].payload.coverage == (rng_of(0, 4),)
        assert decision.outputs[0].policy.recipients() == ["a2", "a3"]

    def test_chaos_is_seeded(self):
        snapshot = [event("e0", problem()), event("e1", raw(0, 2))]
        first = run_policy("chaos", make_ctx(seed=7), *snapshot)
        second = run_policy("chaos", make_ctx(seed=7), *snapshot)
        assert first == second
        assert set(first.actions) == {"e0", "e1"}


class TestDecisionBuilder:
    """Tests for decision accumulation"""

    @pytest.fixture
    def builder(self):
        return DecisionBuilder(make_ctx(), [(event("e0", problem()), 0), (event("e1", raw(0, 2)), 1)])

    def test_undecided_inputs_are_delayed(self, builder):
        builder.consume("e0")
        decision = builder.build()
        assert decision.actions["e1"].action == EdgeAction.DELAY

    def test_double_action_rejected(self, builder):
        builder.consume("e0")
        with pytest.raises(DecisionError):
            builder.discard("e0")

    def test_reroute_to_self_becomes_delay(self, builder):
        builder.reroute("e0", ["a1"])
        assert builder.build().actions["e0"].action == EdgeAction.DELAY

    def test_submit_once(self, builder):
        builder.submit(solution_payload("p0", (rng_of(0, 4),), {}))
        with pytest.raises(DecisionError):
            builder.submit(solution_payload("p0", (rng_of(0, 4),), {}))

    def test_submit_marks_final(self, builder):
        builder.submit(solution_payload("p0", (rng_of(0, 4),), {}))
        decision = builder.build()
        assert decision.submit
        assert decision.outputs[0].payload.is_final_answer

    def test_untouched_memory_not_returned(self, builder):
        assert builder.build().memory is None


class TestRegistry:
    """Tests for policy lookup"""

    def test_catalog(self):
        assert {
            "honest", "premature-submitter", "silent-waiter", "non-submitter",
            "void-router", "hot-potato", "twin-splitter", "eager-duplicator",
            "chaos", "llm-adapter",
        } <= set(available_policies())

    def test_unknown_policy(self):
        with pytest.raises(ConfigError):
            resolve_policy(PolicySpec(name="oracle"))

    def test_register_twice(self):
        with pytest.raises(ConfigError):
            @register_policy("honest")
            class Again(AgentPolicy):
                def decide(self, ctx, snapshot):
                    raise NotImplementedError

    def test_params_reach_policy(self):
        policy = resolve_policy(PolicySpec(name="honest", params={"min_batch": 2}))
        assert policy.min_batch(make_ctx()) == 2

    def test_decide_rejects_empty_snapshot(self):
        with pytest.raises(DecisionError):
            decide(PolicySpec(name="honest"), make_ctx(), [])


class TestNotes:
    """Tests for structured healing notes"""

    def test_format(self):
        text = notes.format_note(notes.UNRESOLVED, signal="ET", events=["e4", "e7"])
        assert text == "note=unresolved signal=ET events=e4,e7"

    def test_parse(self):
        note = notes.parse_note("note=lineage signal=CLA activation=v4 events=e3,e4")
        assert note.kind == notes.LINEAGE
        assert note.attrs["activation"] == "v4"
        assert note.values("events") == ["e3", "e4"]
        assert note.values("missing") == []

    def test_free_text_is_not_a_note(self):
        assert notes.parse_note("please check e4") is None
        assert notes.note_kinds(["please check e4", "note=stalled"]) == ("stalled",)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
