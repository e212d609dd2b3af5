"""
Input validation utilities
"""
import re
from typing import Any, Dict, List, Optional

from dig_runtime.schemas import AgentSpec, PolicySpec, RunMode
from dig_runtime.utils.logging import get_logger

logger = get_logger(__name__)


class InputValidator:
    """Validates and normalizes CLI and config-file parameters"""

    AGENT_PATTERN = re.compile(r'^[a-z][a-z0-9_]{0,31}$', re.IGNORECASE)
    POLICY_PATTERN = re.compile(r'^[a-z][a-z0-9-]{0,47}$')

    TASK_DOMAINS = {
        "count-frequency": "count_frequency",
        "count_frequency": "count_frequency",
        "categorical-frequency": "categorical_frequency",
        "categorical_frequency": "categorical_frequency",
    }
    MODES = {
        "det": RunMode.DETERMINISTIC,
        "deterministic": RunMode.DETERMINISTIC,
        "conc": RunMode.CONCURRENT,
        "concurrent": RunMode.CONCURRENT,
    }
    SWITCHES = {"on": True, "off": False, "true": True, "false": False, "1": True, "0": False}

    @classmethod
    def validate_agent_name(cls, name: str) -> str:
        """Validate agent identifier"""
        if not name:
            raise ValueError("Agent name cannot be empty")

        name = name.strip()

        if not cls.AGENT_PATTERN.match(name):
            raise ValueError(f"Invalid agent name: {name}")

        return name

    @classmethod
    def validate_positive_int(cls, value: Any, field: str) -> int:
        try:
            number = int(value)
        except (TypeError, ValueError):
            raise ValueError(f"{field} must be an integer, got {value!r}")

        if number < 1:
            raise ValueError(f"{field} must be a positive integer")

        return number

    @classmethod
    def validate_seed(cls, value: Any) -> int:
        try:
            seed = int(value)
        except (TypeError, ValueError):
            raise ValueError(f"seed must be an integer, got {value!r}")

        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")

        return seed

    @classmethod
    def validate_task_domain(cls, domain: str) -> str:
        key = (domain or "").strip().lower()

        if key not in cls.TASK_DOMAINS:
            raise ValueError(f"Unknown task: {domain}. Valid tasks: count-frequency, categorical-frequency")

        return cls.TASK_DOMAINS[key]

    @classmethod
    def validate_mode(cls, mode: Optional[str]) -> RunMode:
        if not mode:
            return RunMode.DETERMINISTIC

        key = mode.strip().lower()

        if key not in cls.MODES:
            raise ValueError(f"Invalid mode: {mode}. Valid modes: det, conc")

        return cls.MODES[key]

    @classmethod
    def validate_switch(cls, value: Any, field: str) -> bool:
        if isinstance(value, bool):
            return value

        key = str(value).strip().lower()

        if key not in cls.SWITCHES:
            raise ValueError(f"{field} must be on or off, got {value!r}")

        return cls.SWITCHES[key]

    @classmethod
    def parse_policy(cls, text: str) -> PolicySpec:
        """
        Parse `name[:key=value[:key=value...]]`

        Values that look like integers become ints.
        """
        parts = [p.strip() for p in text.strip().split(":") if p.strip()]
        if not parts:
            raise ValueError("Empty policy")

        name = parts[0].lower()
        if not cls.POLICY_PATTERN.match(name):
            raise ValueError(f"Invalid policy name: {parts[0]}")

        params: Dict[str, Any] = {}
        for item in parts[1:]:
            if "=" not in item:
                raise ValueError(f"Policy parameter must be key=value: {item}")
            key, raw = item.split("=", 1)
            raw = raw.strip()
            params[key.strip()] = int(raw) if re.fullmatch(r'-?\d+', raw) else raw

        return PolicySpec(name=name, params=params)

    @classmethod
    def parse_policies(cls, spec: Optional[str], agent_names: List[str]) -> List[AgentSpec]:
        """
        Resolve a policy assignment string against the agent list.

        Comma-separated entries; `agent=policy` binds one agent, a bare
        `policy` becomes the default for all unbound agents.

            honest,a2=premature-submitter,a3=twin-splitter:half=1
        """
        default = PolicySpec(name="honest")
        bound: Dict[str, PolicySpec] = {}

        for entry in (spec or "").split(","):
            entry = entry.strip()
            if not entry:
                continue
            head = entry.split(":", 1)[0]
            if "=" in head:
                agent, policy_text = entry.split("=", 1)
                agent = cls.validate_agent_name(agent)
                if agent not in agent_names:
                    raise ValueError(f"Policy bound to unknown agent: {agent}")
                bound[agent] = cls.parse_policy(policy_text)
            else:
                default = cls.parse_policy(entry)

        logger.debug("policies_parsed", default=default.name, bound=sorted(bound))
        return [AgentSpec(name=a, policy=bound.get(a, default)) for a in agent_names]
