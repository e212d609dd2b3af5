from agents.base import (
    AgentPolicy,
    DecisionBuilder,
    PolicyContext,
    available_policies,
    decide,
    register_policy,
    resolve_policy,
)
from agents import honest, faults  # noqa: F401  (registers the catalog)
from connectors import llm_policy  # noqa: F401

__all__ = [
    "AgentPolicy",
    "DecisionBuilder",
    "PolicyContext",
    "available_policies",
    "decide",
    "register_policy",
    "resolve_policy",
]
