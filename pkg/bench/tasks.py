"""
Benchmark tasks
Count-frequency and categorical-frequency instances, ground truth and scoring.
"""
import json
import math
import random
from collections import Counter
from typing import Any, Dict, List, Mapping, Optional

from pydantic import BaseModel, Field, ValidationError

from dig_runtime.schemas import CoverageRange, Event, Payload, PayloadKind, SolutionBody
from dig_runtime.utils.validation import InputValidator

COUNT_FREQUENCY = "count_frequency"
CATEGORICAL_FREQUENCY = "categorical_frequency"

CF_ALPHABET = 100
CATEGORIES = [f"c{i:02d}" for i in range(20)]

DIFFICULTY_SIZES = {
    COUNT_FREQUENCY: {"easy": 1000, "medium": 5000, "hard": 10000},
    CATEGORICAL_FREQUENCY: {"easy": 60, "medium": 100, "hard": 150},
}

ROOT_PROBLEM = "p0"


class TaskInstance(BaseModel):
    domain: str
    size: int = Field(..., gt=0)
    seed: int
    items: List[Any]
    payload: Payload
    ground_truth: Dict[str, int]


def count(items: List[Any]) -> Dict[str, int]:
    return dict(Counter(str(i) for i in items))


def generate_task(domain: str, size: int, seed: int = 0) -> TaskInstance:
    """Deterministic instance for (domain, size, seed)"""
    domain = InputValidator.validate_task_domain(domain)
    size = InputValidator.validate_positive_int(size, "size")
    rng = random.Random(seed)
    if domain == COUNT_FREQUENCY:
        items: List[Any] = [rng.randrange(CF_ALPHABET) for _ in range(size)]
    else:
        items = [rng.choice(CATEGORIES) for _ in range(size)]

    payload = Payload(
        kind=PayloadKind.PROBLEM,
        problem_id=ROOT_PROBLEM,
        body=json.dumps({"domain": domain, "items": items}).encode("utf-8"),
        coverage=(CoverageRange(start=0, end=size),),
    )
    return TaskInstance(
        domain=domain, size=size, seed=seed, items=items, payload=payload, ground_truth=count(items)
    )


def size_for(domain: str, difficulty: str) -> int:
    domain = InputValidator.validate_task_domain(domain)
    try:
        return DIFFICULTY_SIZES[domain][difficulty]
    except KeyError:
        raise ValueError(f"Unknown difficulty: {difficulty}. Use one of {sorted(DIFFICULTY_SIZES[domain])}")


def score_rmse(predicted: Mapping[str, int], truth: Mapping[str, int]) -> float:
    """Root mean squared per-key error over the union of keys; missing keys count as 0"""
    keys = set(predicted) | set(truth)
    if not keys:
        return 0.0
    total = sum((predicted.get(k, 0) - truth.get(k, 0)) ** 2 for k in keys)
    return math.sqrt(total / len(keys))


def parse_solution(payload: Payload) -> Optional[SolutionBody]:
    if payload.kind != PayloadKind.SOLUTION or not payload.body:
        return None
    try:
        return SolutionBody.model_validate_json(payload.body)
    except ValidationError:
        return None


def is_valid_output(final: Optional[Event], task: TaskInstance) -> bool:
    """Final event parses as a solution and covers exactly the root range"""
    if final is None:
        return False
    if parse_solution(final.payload) is None:
        return False
    return list(final.payload.coverage) == list(task.payload.coverage)


def evaluate(final: Optional[Event], task: TaskInstance) -> Dict[str, Any]:
    """valid_output and rmse for a run's final event (rmse is None without a parsable answer)"""
    solution = parse_solution(final.payload) if final is not None else None
    return {
        "valid_output": is_valid_output(final, task),
        "rmse": score_rmse(solution.counts, task.ground_truth) if solution is not None else None,
    }
