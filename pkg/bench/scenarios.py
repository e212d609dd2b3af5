"""
Scripted scenarios
Small count-frequency runs wired so that each one reproduces exactly one
failure class (plus the honest baselines). Seeds only change the data,
never the interaction structure.
"""
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from bench.tasks import COUNT_FREQUENCY, TaskInstance, generate_task
from dig_runtime.scheduler import RunState, init_run, run_to_completion
from dig_runtime.schemas import (
    FailureClass,
    RunConfig,
    RunMode,
    RunResult,
    ThresholdSet,
)
from dig_runtime.utils.validation import InputValidator


def agent_names(count: int) -> List[str]:
    return [f"a{i}" for i in range(1, count + 1)]


class Scenario(BaseModel):
    name: str
    description: str
    target: Optional[FailureClass] = None
    agents: int = Field(..., gt=0)
    policies: str = "honest"
    size: int = 4
    initial_recipients: Optional[List[str]] = None
    aggregator: Optional[str] = None
    thresholds: ThresholdSet = Field(default_factory=ThresholdSet)
    max_ticks: int = 2_000
    idle_limit: int = 30
    # warnings that legitimately accompany the target class
    companions: Tuple[FailureClass, ...] = ()

    def build(
        self,
        seed: int = 0,
        healing: bool = False,
        mode: RunMode = RunMode.DETERMINISTIC,
        **overrides,
    ) -> Tuple[RunConfig, TaskInstance]:
        names = agent_names(self.agents)
        config = RunConfig(
            agents=InputValidator.parse_policies(self.policies, names),
            initial_recipients=self.initial_recipients or names[:1],
            aggregator=self.aggregator,
            seed=seed,
            mode=mode,
            healing=healing,
            thresholds=self.thresholds,
            max_ticks=self.max_ticks,
            idle_limit=self.idle_limit,
        )
        if overrides:
            config = config.model_copy(update=overrides)
        return config, generate_task(COUNT_FREQUENCY, self.size, seed)


SCENARIOS: Dict[str, Scenario] = {
    s.name: s
    for s in (
        Scenario(name="s1", description="single honest agent", agents=1),
        Scenario(name="s3", description="three honest agents, one split", agents=3),
        Scenario(
            name="s-et",
            description="a2 submits its half as the final answer while a3 still works",
            target=FailureClass.ET,
            agents=3,
            policies="honest,a2=premature-submitter",
        ),
        Scenario(
            name="s-mc",
            description="aggregator a1 completes the answer but never submits",
            target=FailureClass.MC,
            agents=2,
            policies="honest,a1=non-submitter",
        ),
        Scenario(
            name="s-dl",
            description="a2 holds its raw data forever",
            target=FailureClass.DL,
            agents=2,
            policies="honest,a2=silent-waiter",
        ),
        Scenario(
            name="s-oe",
            description="a2 addresses its solution to an agent that does not exist",
            target=FailureClass.OE,
            agents=2,
            policies="honest,a2=void-router",
            thresholds=ThresholdSet(mc_window=60),
        ),
        Scenario(
            name="s-er",
            description="a2 and a3 bounce their raw data between each other",
            target=FailureClass.ER,
            agents=3,
            policies="honest,a2=hot-potato,a3=hot-potato",
            max_ticks=120,
        ),
        Scenario(
            name="s-cla",
            description="a1 and a2 each take half of the root on their own; a3 merges both",
            target=FailureClass.CLA,
            agents=3,
            policies="honest:min_batch=2,a1=twin-splitter:half=0,a2=twin-splitter:half=1",
            initial_recipients=["a1", "a2"],
            aggregator="a3",
            companions=(FailureClass.RSP,),
        ),
        Scenario(
            name="s-rsp",
            description="a1 multicasts the whole raw data to a2 and a3",
            target=FailureClass.RSP,
            agents=3,
            policies="honest,a1=eager-duplicator:min_batch=2",
        ),
    )
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name.lower()]
    except KeyError:
        raise ValueError(f"Unknown scenario: {name}. Known: {sorted(SCENARIOS)}")


def run_scenario(
    name: str,
    seed: int = 0,
    healing: bool = False,
    sink=None,
    strict: bool = False,
    **overrides,
) -> Tuple[RunState, RunResult, TaskInstance]:
    config, task = get_scenario(name).build(seed=seed, healing=healing, **overrides)
    state = init_run(config, task.payload, sink=sink, strict=strict)
    return state, run_to_completion(state), task
