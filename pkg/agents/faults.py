"""
Fault-injection policy catalog

Each policy breaks the honest pipeline in one way, so that its scenario
reproduces one failure class. Events carrying healing notes fall back to
honest handling, which is how healing gets through to faulty agents.
"""
from typing import List

from agents.base import AgentPolicy, DecisionBuilder, PolicyContext, Snapshot, register_policy
from agents.honest import (
    HonestPolicy,
    count_items,
    raw_payload,
    read_items,
    solution_payload,
)
from dig_runtime.core import split_range
from dig_runtime.schemas import (
    Decision,
    DeliveryPolicy,
    DeliveryWave,
    Event,
    Payload,
    PayloadKind,
)


@register_policy("premature-submitter")
class PrematureSubmitter(HonestPolicy):
    """Submits its partial solution as the final answer (ET)"""

    def on_raw_data(self, ctx: PolicyContext, plan: DecisionBuilder, event: Event) -> None:
        if plan.submitting or event.payload.injected_notes:
            return super().on_raw_data(ctx, plan, event)
        plan.consume(event.event_id)
        counts = count_items(read_items(event.payload))
        plan.submit(solution_payload(event.payload.problem_id, event.payload.coverage, counts, final=True))


@register_policy("silent-waiter")
class SilentWaiter(HonestPolicy):
    """Delays everything until a system broadcast shows up (DL)"""

    def decide(self, ctx: PolicyContext, snapshot: Snapshot) -> Decision:
        if any(event.payload.kind == PayloadKind.SYSTEM for event, _ in snapshot):
            return super().decide(ctx, snapshot)
        plan = DecisionBuilder(ctx, snapshot)
        for event, _ in snapshot:
            plan.delay(event.event_id)
        return plan.build()


@register_policy("non-submitter")
class NonSubmitter(HonestPolicy):
    """Aggregates the full answer but never submits unless told work is exhausted (MC)"""

    def should_submit(self, ctx: PolicyContext, plan: DecisionBuilder, exhausted: bool) -> bool:
        return exhausted and super().should_submit(ctx, plan, exhausted)


@register_policy("void-router")
class VoidRouter(HonestPolicy):
    """Addresses every output to an agent that does not exist (OE)"""

    def send(self, ctx: PolicyContext, plan: DecisionBuilder, payload: Payload, recipients: List[str]) -> None:
        plan.emit(payload, [str(self.params.get("target", "void"))])


@register_policy("hot-potato")
class HotPotato(HonestPolicy):
    """Reroutes every plain event round-robin over non-aggregator peers (ER)"""

    def handle(self, ctx: PolicyContext, plan: DecisionBuilder, event: Event) -> None:
        if event.payload.kind == PayloadKind.SYSTEM or event.payload.injected_notes:
            return super().handle(ctx, plan, event)
        ring = [a for a in ctx.peers if a != ctx.aggregator]
        if not ring:
            return super().handle(ctx, plan, event)
        plan.reroute(event.event_id, [ring[event.reroute_count % len(ring)]])


@register_policy("twin-splitter")
class TwinSplitter(HonestPolicy):
    """
    Independently takes one half of the root problem and solves it directly.
    Two of them on the same root produce sibling solutions with no common
    real generator (CLA).
    """

    def on_problem(self, ctx: PolicyContext, plan: DecisionBuilder, event: Event) -> None:
        if tuple(event.payload.coverage) != (ctx.root,):
            return super().on_problem(ctx, plan, event)
        plan.consume(event.event_id)
        parts = split_range(ctx.root, int(self.params.get("parts", 2)))
        part = parts[int(self.params.get("half", 0)) % len(parts)]
        items = ctx.fetch(part.start, part.end) if ctx.fetch else []
        problem_id = f"{event.payload.problem_id}.{self.params.get('half', 0)}"
        self.deliver_solution(ctx, plan, problem_id, (part,), count_items(items))


@register_policy("eager-duplicator")
class EagerDuplicator(HonestPolicy):
    """Multicasts the whole raw data to two solvers instead of splitting (RSP)"""

    def on_problem(self, ctx: PolicyContext, plan: DecisionBuilder, event: Event) -> None:
        solvers = list(ctx.peers)[: int(self.params.get("copies", 2))]
        if len(solvers) < 2:
            return super().on_problem(ctx, plan, event)
        plan.consume(event.event_id)
        for rng in event.payload.coverage:
            plan.emit(raw_payload(ctx, event.payload.problem_id, rng), solvers)


@register_policy("chaos")
class ChaosPolicy(AgentPolicy):
    """Seeded random actions and outputs, for fuzzing the detectors"""

    KINDS = (PayloadKind.PROBLEM, PayloadKind.RAW_DATA, PayloadKind.SOLUTION)

    def decide(self, ctx: PolicyContext, snapshot: Snapshot) -> Decision:
        rng = ctx.rng
        plan = DecisionBuilder(ctx, snapshot)
        consumed = 0

        for event, _ in snapshot:
            roll = rng.random()
            if roll < 0.55:
                plan.consume(event.event_id)
                consumed += 1
            elif roll < 0.7:
                plan.delay(event.event_id)
            elif roll < 0.85 and ctx.peers:
                plan.reroute(event.event_id, [rng.choice(ctx.peers)])
            else:
                plan.discard(event.event_id)

        if not consumed:
            return plan.build()

        audience = list(ctx.agents) + [str(self.params.get("ghost", "ghost"))]
        for i in range(rng.choice((0, 1, 1, 2, 2, 3))):
            payload = Payload(
                kind=rng.choice(self.KINDS),
                problem_id=f"{ctx.root_problem}.x{ctx.now}.{i}",
                coverage=(ctx.root,),
            )
            first = rng.sample(audience, k=1)
            if rng.random() < 0.25:
                later = rng.sample(audience, k=1)
                policy = DeliveryPolicy(schedule=(
                    DeliveryWave(delay=0, recipients=tuple(first)),
                    DeliveryWave(delay=rng.choice((1, 2, 3)), recipients=tuple(later)),
                ))
            else:
                policy = DeliveryPolicy.immediate(first)
            plan.emit_with_policy(payload, policy)

        if rng.random() < float(self.params.get("submit_rate", 0.08)):
            plan.submit(solution_payload(ctx.root_problem, (ctx.root,), {}, final=True))
        return plan.build()
