"""
Honest split / solve / aggregate pipeline

Problems larger than the solve chunk are split into `fanout` disjoint
parts; parts at or below the chunk carry their raw data slice. Raw data
becomes a frequency solution sent to the aggregator, which folds solutions
into its private memory and submits once the root coverage is complete.
"""
import json
from collections import Counter
from typing import Any, Dict, List, Sequence

from agents.base import AgentPolicy, DecisionBuilder, PolicyContext, Snapshot, register_policy
from agents import notes
from dig_runtime.core import any_overlap, covers, merge_ranges, split_range
from dig_runtime.schemas import CoverageRange, Decision, Event, Payload, PayloadKind


def read_items(payload: Payload) -> List[Any]:
    if not payload.body:
        return []
    return list(json.loads(payload.body).get("items", []))


def read_counts(payload: Payload) -> Dict[str, int]:
    if not payload.body:
        return {}
    return {str(k): int(v) for k, v in json.loads(payload.body).get("counts", {}).items()}


def count_items(items: Sequence[Any]) -> Dict[str, int]:
    return dict(Counter(str(item) for item in items))


def solution_payload(
    problem_id: str,
    coverage: Sequence[CoverageRange],
    counts: Dict[str, int],
    final: bool = False,
) -> Payload:
    body = json.dumps({"counts": counts}, sort_keys=True).encode("utf-8")
    return Payload(
        kind=PayloadKind.SOLUTION,
        problem_id=problem_id,
        body=body,
        coverage=tuple(coverage),
        is_final_answer=final,
    )


def raw_payload(ctx: PolicyContext, problem_id: str, part: CoverageRange) -> Payload:
    items = ctx.fetch(part.start, part.end) if ctx.fetch else []
    return Payload(
        kind=PayloadKind.RAW_DATA,
        problem_id=problem_id,
        body=json.dumps({"items": items}).encode("utf-8"),
        coverage=(part,),
    )


def memory_coverage(memory: Dict[str, Any]) -> List[CoverageRange]:
    return [CoverageRange(start=s, end=e) for s, e in memory.get("coverage", [])]


@register_policy("honest")
class HonestPolicy(AgentPolicy):
    """Reference pipeline; fault policies override single hooks"""

    def decide(self, ctx: PolicyContext, snapshot: Snapshot) -> Decision:
        plan = DecisionBuilder(ctx, snapshot)
        kinds = {k for event, _ in snapshot for k in notes.note_kinds(event.payload.injected_notes)}
        exhausted = notes.EXHAUSTED in kinds
        woken = (
            exhausted
            or notes.STALLED in kinds
            or any(event.payload.kind == PayloadKind.SYSTEM for event, _ in snapshot)
        )

        absorbable = [
            event.event_id for event, _ in snapshot
            if event.payload.kind == PayloadKind.SOLUTION
            and notes.UNRESOLVED not in notes.note_kinds(event.payload.injected_notes)
        ]
        hold = ctx.is_aggregator and not woken and len(absorbable) < self.min_batch(ctx)

        for event, _ in snapshot:
            if hold and event.event_id in absorbable:
                plan.delay(event.event_id)
                continue
            self.handle(ctx, plan, event)

        if self.should_submit(ctx, plan, exhausted):
            self.submit_aggregate(ctx, plan)
        return plan.build()

    # ------------------------------------------------------------ hooks

    def min_batch(self, ctx: PolicyContext) -> int:
        return int(self.params.get("min_batch", 1))

    def chunk(self, ctx: PolicyContext) -> int:
        return max(1, int(self.params.get("chunk", ctx.chunk)))

    def fanout(self, ctx: PolicyContext) -> int:
        return max(2, int(self.params.get("fanout", ctx.fanout)))

    def handle(self, ctx: PolicyContext, plan: DecisionBuilder, event: Event) -> None:
        payload = event.payload
        kinds = notes.note_kinds(payload.injected_notes)

        if payload.kind == PayloadKind.SYSTEM:
            self.on_system(ctx, plan, event)
        elif payload.kind == PayloadKind.SOLUTION and notes.UNRESOLVED in kinds:
            self.on_unresolved(ctx, plan, event)
        elif payload.kind == PayloadKind.SOLUTION and notes.ORPHANED in kinds and not ctx.is_aggregator:
            plan.reroute(event.event_id, [ctx.aggregator])
        elif payload.kind == PayloadKind.PROBLEM:
            self.on_problem(ctx, plan, event)
        elif payload.kind == PayloadKind.RAW_DATA:
            self.on_raw_data(ctx, plan, event)
        else:
            self.on_solution(ctx, plan, event)

    def on_system(self, ctx: PolicyContext, plan: DecisionBuilder, event: Event) -> None:
        # stalled / exhausted broadcasts are acted on in decide()
        plan.consume(event.event_id)

    def on_problem(self, ctx: PolicyContext, plan: DecisionBuilder, event: Event) -> None:
        plan.consume(event.event_id)
        payload = event.payload
        for rng in payload.coverage:
            if rng.size > self.chunk(ctx) and len(ctx.agents) > 1:
                for i, part in enumerate(split_range(rng, self.fanout(ctx))):
                    problem_id = f"{payload.problem_id}.{i}"
                    target = self.route_part(ctx, part)
                    if part.size > self.chunk(ctx):
                        sub = Payload(kind=PayloadKind.PROBLEM, problem_id=problem_id, coverage=(part,))
                        self.send(ctx, plan, sub, [target])
                    else:
                        self.send(ctx, plan, raw_payload(ctx, problem_id, part), [target])
            else:
                self.send(ctx, plan, raw_payload(ctx, payload.problem_id, rng), [ctx.self_id])

    def on_raw_data(self, ctx: PolicyContext, plan: DecisionBuilder, event: Event) -> None:
        plan.consume(event.event_id)
        counts = count_items(read_items(event.payload))
        self.deliver_solution(ctx, plan, event.payload.problem_id, event.payload.coverage, counts)

    def on_solution(self, ctx: PolicyContext, plan: DecisionBuilder, event: Event) -> None:
        if not ctx.is_aggregator:
            plan.reroute(event.event_id, [ctx.aggregator])
            return
        plan.consume(event.event_id)
        self.absorb(plan, event.payload.coverage, read_counts(event.payload))

    def on_unresolved(self, ctx: PolicyContext, plan: DecisionBuilder, event: Event) -> None:
        """Our submission came back with unresolved work: hand it to the aggregator instead"""
        plan.consume(event.event_id)
        payload = event.payload
        if ctx.is_aggregator:
            plan.memory["submitted"] = False
            self.absorb(plan, payload.coverage, read_counts(payload))
            return
        copy = solution_payload(payload.problem_id, payload.coverage, read_counts(payload))
        self.send(ctx, plan, copy, [ctx.aggregator])

    def route_part(self, ctx: PolicyContext, part: CoverageRange) -> str:
        return ctx.agents[(1 + part.start // self.chunk(ctx)) % len(ctx.agents)]

    def send(self, ctx: PolicyContext, plan: DecisionBuilder, payload: Payload, recipients: List[str]) -> None:
        plan.emit(payload, recipients)

    def deliver_solution(
        self,
        ctx: PolicyContext,
        plan: DecisionBuilder,
        problem_id: str,
        coverage: Sequence[CoverageRange],
        counts: Dict[str, int],
    ) -> None:
        if ctx.is_aggregator:
            self.absorb(plan, coverage, counts)
        else:
            self.send(ctx, plan, solution_payload(problem_id, coverage, counts), [ctx.aggregator])

    def absorb(self, plan: DecisionBuilder, coverage: Sequence[CoverageRange], counts: Dict[str, int]) -> bool:
        """Fold a partial solution into memory; overlapping duplicates are ignored"""
        held = memory_coverage(plan.memory)
        if any_overlap(coverage, held):
            return False
        merged = merge_ranges(list(held) + list(coverage))
        plan.memory["coverage"] = [[r.start, r.end] for r in merged]
        totals = dict(plan.memory.get("counts", {}))
        for key, value in counts.items():
            totals[key] = totals.get(key, 0) + value
        plan.memory["counts"] = totals
        return True

    def should_submit(self, ctx: PolicyContext, plan: DecisionBuilder, exhausted: bool) -> bool:
        if plan.submitting or plan.memory.get("submitted"):
            return False
        held = memory_coverage(plan.memory)
        if not held:
            return False
        return exhausted or covers(held, [ctx.root])

    def submit_aggregate(self, ctx: PolicyContext, plan: DecisionBuilder) -> None:
        held = memory_coverage(plan.memory)
        plan.submit(solution_payload(ctx.root_problem, held, plan.memory.get("counts", {}), final=True))
        plan.memory["submitted"] = True
