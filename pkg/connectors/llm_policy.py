"""
External decide adapter
Forwards a buffer snapshot to an out-of-process policy (for example an
LLM-backed agent) and parses its answer into a Decision.

Ships disabled: set DIG_LLM_POLICY_ENABLED=true to allow `llm-adapter`.
"""
from typing import Any, Dict, Optional

import httpx
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from agents.base import AgentPolicy, DecisionBuilder, PolicyContext, Snapshot, register_policy
from dig_runtime.config import get_settings
from dig_runtime.exceptions import ConfigError, DecisionError
from dig_runtime.schemas import Decision, DeliveryPolicy, EdgeAction, Payload, PayloadKind
from dig_runtime.utils.logging import get_logger

logger = get_logger(__name__)


class PolicyServiceError(Exception):
    """Remote policy answered with a server error"""
    pass


class LLMPolicyClient:
    """Synchronous client for the remote decide endpoint"""

    def __init__(self, url: Optional[str] = None, timeout: Optional[float] = None):
        settings = get_settings()
        self._url = url or settings.llm_policy_url
        self._client = httpx.Client(timeout=timeout or settings.llm_policy_timeout_sec)

    def close(self):
        self._client.close()

    @retry(
        stop=stop_after_attempt(3),
        wait=wait_exponential(multiplier=1, min=1, max=10),
        retry=retry_if_exception_type((httpx.TransportError, PolicyServiceError))
    )
    def request_decision(self, request: Dict[str, Any]) -> Dict[str, Any]:
        logger.info("llm_policy_request", agent=request["agent"], inputs=len(request["input_events"]))
        response = self._client.post(self._url, json=request)

        if response.status_code >= 500:
            logger.warning("llm_policy_server_error", status=response.status_code)
            raise PolicyServiceError(f"Policy service returned {response.status_code}")

        response.raise_for_status()
        return response.json()


def build_request(ctx: PolicyContext, snapshot: Snapshot) -> Dict[str, Any]:
    """Snapshot in the trace envelope schema plus the body as text"""
    return {
        "agent": ctx.self_id,
        "available_agents": list(ctx.peers),
        "aggregator": ctx.aggregator,
        "now": ctx.now,
        "input_events": [
            {
                "event_id": event.event_id,
                "received_at": received_at,
                "reroute_count": event.reroute_count,
                "payload": event.payload.envelope(),
                "body": event.payload.body.decode("utf-8", errors="replace"),
            }
            for event, received_at in snapshot
        ],
    }


def parse_response(ctx: PolicyContext, snapshot: Snapshot, raw: Dict[str, Any]) -> Decision:
    """
    Expected shape:
        {"input_actions": {event_id: {"action": "consume", "targets": []}},
         "out_events": [{"kind": "solution", "problem_id": "...", "body": "...",
                         "coverage": [[0, 4]], "recipients": ["a2"],
                         "is_final_answer": false}]}
    """
    plan = DecisionBuilder(ctx, snapshot)
    known = {event.event_id for event, _ in snapshot}

    for event_id, spec in (raw.get("input_actions") or {}).items():
        if event_id not in known:
            raise DecisionError(f"Remote policy acted on unknown event {event_id}")
        action = EdgeAction(spec.get("action", "delay"))
        if action == EdgeAction.CONSUME:
            plan.consume(event_id)
        elif action == EdgeAction.REROUTE:
            plan.reroute(event_id, spec.get("targets", []))
        elif action == EdgeAction.DISCARD:
            plan.discard(event_id)
        else:
            plan.delay(event_id)

    for out in raw.get("out_events") or []:
        kind = PayloadKind(out.get("kind", "solution"))
        if kind == PayloadKind.SYSTEM:
            raise DecisionError("Agents may not emit system events")
        payload = Payload.model_validate({
            "kind": kind,
            "problem_id": out.get("problem_id", ctx.root_problem),
            "body": str(out.get("body", "")).encode("utf-8"),
            "coverage": [{"start": s, "end": e} for s, e in out.get("coverage", [])],
            "is_final_answer": bool(out.get("is_final_answer", False)),
        })
        if payload.is_final_answer:
            plan.submit(payload)
        else:
            plan.emit_with_policy(payload, DeliveryPolicy.immediate(out.get("recipients", [])))

    return plan.build()


@register_policy("llm-adapter")
class LLMAdapterPolicy(AgentPolicy):
    """Decide contract answered by an external process"""

    def __init__(self, params: Optional[Dict[str, Any]] = None):
        super().__init__(params)
        settings = get_settings()
        if not settings.llm_policy_enabled:
            raise ConfigError("llm-adapter policy is disabled (set DIG_LLM_POLICY_ENABLED=true)")
        self._client = LLMPolicyClient(url=self.params.get("url"))

    def decide(self, ctx: PolicyContext, snapshot: Snapshot) -> Decision:
        raw = self._client.request_decision(build_request(ctx, snapshot))
        return parse_response(ctx, snapshot, raw)
