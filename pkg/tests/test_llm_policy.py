"""
Tests for the external decide adapter
"""
import json
import random
from unittest.mock import MagicMock, patch

import httpx
import pytest
from tenacity import wait_none

from agents.base import PolicyContext
from connectors.llm_policy import (
    LLMAdapterPolicy,
    LLMPolicyClient,
    PolicyServiceError,
    build_request,
    parse_response,
)
from dig_runtime.exceptions import ConfigError, DecisionError
from dig_runtime.schemas import CoverageRange, EdgeAction, Event, Payload, PayloadKind


def make_ctx():
    return PolicyContext(
        self_id="a2",
        peers=("a1", "a3"),
        agents=("a1", "a2", "a3"),
        aggregator="a1",
        root=CoverageRange(start=0, end=4),
        root_problem="p0",
        chunk=2,
        fanout=2,
        rng=random.Random(0),
        now=7,
    )


def raw_event(event_id="e1"):
    payload = Payload(
        kind=PayloadKind.RAW_DATA,
        problem_id="p0.0",
        body=json.dumps({"items": [3, 3, 5]}).encode("utf-8"),
        coverage=(CoverageRange(start=0, end=2),),
    )
    return Event(event_id=event_id, payload=payload, origin="v1", generated_at=3)


def settings(enabled=True):
    return MagicMock(
        llm_policy_enabled=enabled,
        llm_policy_url="http://policy.test/decide",
        llm_policy_timeout_sec=5.0,
    )


def response(status=200, body=None):
    mock = MagicMock(status_code=status)
    mock.json.return_value = body or {}
    mock.raise_for_status = MagicMock()
    return mock


@pytest.fixture
def snapshot():
    return [(raw_event("e1"), 4), (raw_event("e2"), 5)]


class TestRequestShape:
    """Tests for the outgoing request"""

    def test_build_request(self, snapshot):
        request = build_request(make_ctx(), snapshot)
        assert request["agent"] == "a2"
        assert request["available_agents"] == ["a1", "a3"]
        assert request["now"] == 7
        first = request["input_events"][0]
        assert first["event_id"] == "e1"
        assert first["received_at"] == 4
        assert first["payload"]["kind"] == "raw_data"
        assert json.loads(first["body"]) == {"items": [3, 3, 5]}


class TestParseResponse:
    """Tests for mapping a remote answer onto a Decision"""

    def test_actions_and_outputs(self, snapshot):
        raw = {
            "input_actions": {"e1": {"action": "consume"}, "e2": {"action": "reroute", "targets": ["a3"]}},
            "out_events": [
                {"kind": "solution", "body": '{"counts": {"3": 2, "5": 1}}', "coverage": [[0, 2]], "recipients": ["a1"]},
            ],
        }
        decision = parse_response(make_ctx(), snapshot, raw)
        assert decision.actions["e1"].action == EdgeAction.CONSUME
        assert decision.actions["e2"].targets == ("a3",)
        [out] = decision.outputs
        assert out.payload.problem_id == "p0"
        assert out.policy.recipients() == ["a1"]
        assert not decision.submit

    def test_unmentioned_inputs_stay_buffered(self, snapshot):
        decision = parse_response(make_ctx(), snapshot, {"input_actions": {"e1": {"action": "discard"}}})
        assert decision.actions["e2"].action == EdgeAction.DELAY

    def test_final_answer_submits(self, snapshot):
        raw = {"out_events": [{"kind": "solution", "body": "{}", "coverage": [[0, 4]], "is_final_answer": True}]}
        decision = parse_response(make_ctx(), snapshot, raw)
        assert decision.submit
        assert decision.outputs[0].policy.exhausted

    def test_unknown_event(self, snapshot):
        with pytest.raises(DecisionError):
            parse_response(make_ctx(), snapshot, {"input_actions": {"e9": {"action": "consume"}}})

    def test_no_system_events(self, snapshot):
        with pytest.raises(DecisionError):
            parse_response(make_ctx(), snapshot, {"out_events": [{"kind": "system"}]})

    def test_bad_action(self, snapshot):
        with pytest.raises(ValueError):
            parse_response(make_ctx(), snapshot, {"input_actions": {"e1": {"action": "teleport"}}})


class TestClient:
    """Tests for the HTTP client"""

    @pytest.fixture
    def client(self):
        with patch("connectors.llm_policy.get_settings", return_value=settings()):
            client = LLMPolicyClient()
        yield client
        client.close()

    def test_request(self, client, snapshot):
        answer = {"input_actions": {"e1": {"action": "consume"}}}
        with patch.object(client._client, "post", return_value=response(body=answer)) as mock_post:
            result = client.request_decision(build_request(make_ctx(), snapshot))
        assert result == answer
        assert mock_post.call_args.args[0] == "http://policy.test/decide"
        assert mock_post.call_args.kwargs["json"]["agent"] == "a2"

    def test_server_error_retried(self, client, snapshot):
        fast = LLMPolicyClient.request_decision.retry_with(wait=wait_none())
        replies = [response(status=503), response(body={"out_events": []})]
        with patch.object(client._client, "post", side_effect=replies) as mock_post:
            result = fast(client, build_request(make_ctx(), snapshot))
        assert result == {"out_events": []}
        assert mock_post.call_count == 2

    def test_gives_up(self, client, snapshot):
        fast = LLMPolicyClient.request_decision.retry_with(wait=wait_none(), reraise=True)
        with patch.object(client._client, "post", side_effect=httpx.ConnectError("refused")) as mock_post:
            with pytest.raises(httpx.ConnectError):
                fast(client, build_request(make_ctx(), snapshot))
        assert mock_post.call_count == 3

    def test_server_error_type(self, client, snapshot):
        fast = LLMPolicyClient.request_decision.retry_with(wait=wait_none(), reraise=True)
        with patch.object(client._client, "post", return_value=response(status=500)):
            with pytest.raises(PolicyServiceError):
                fast(client, build_request(make_ctx(), snapshot))


class TestAdapterPolicy:
    """Tests for the registered policy"""

    def test_disabled_by_default(self):
        with patch("connectors.llm_policy.get_settings", return_value=settings(enabled=False)):
            with pytest.raises(ConfigError):
                LLMAdapterPolicy()

    def test_decide(self, snapshot):
        with patch("connectors.llm_policy.get_settings", return_value=settings()):
            policy = LLMAdapterPolicy({"url": "http://other.test/decide"})
        answer = {"input_actions": {"e1": {"action": "consume"}, "e2": {"action": "consume"}}}
        with patch.object(policy._client, "request_decision", return_value=answer) as mock_request:
            decision = policy.decide(make_ctx(), snapshot)
        assert mock_request.call_args.args[0]["agent"] == "a2"
        assert {a.action for a in decision.actions.values()} == {EdgeAction.CONSUME}
        assert policy._client._url == "http://other.test/decide"


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
