"""
Experiment matrix
Runs agents x difficulty x method cells, averages detected errors, RMSE and
ticks over the error runs, and the valid-output rate over the validity runs.
Output is an aligned text table plus one JSON line per cell.
"""
import hashlib
import json
import statistics
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator

from bench.tasks import evaluate, generate_task, size_for
from bench.scenarios import agent_names
from dig_runtime.exceptions import ConfigError
from dig_runtime.scheduler import init_run, run_to_completion
from dig_runtime.schemas import CLASS_ORDER, RunConfig, ThresholdSet
from dig_runtime.utils.logging import get_logger
from dig_runtime.utils.validation import InputValidator

logger = get_logger(__name__)

METHODS = {"mas_only": False, "mas_dig": True}

RESULT_FIELDS = (
    "agents", "difficulty", "method", "domain", "size", "runs",
    "errors", "rmse", "ticks", "valid_rate", "runtime_seconds", "error",
)


class RunCounts(BaseModel):
    errors: int = Field(default=3, gt=0)
    valid: int = Field(default=10, gt=0)


class MatrixConfig(BaseModel):
    seed: int = 0
    domain: str = "count-frequency"
    agents: List[int] = Field(default_factory=list)
    difficulty: List[str] = Field(default_factory=list)
    methods: List[str] = Field(default_factory=lambda: list(METHODS))
    # one policy string for every cell, or one per agent count
    policies: Union[str, Dict[int, str]] = "honest"
    runs: RunCounts = Field(default_factory=RunCounts)
    thresholds: ThresholdSet = Field(default_factory=ThresholdSet)
    max_ticks: int = Field(default=100_000, gt=0)
    idle_limit: int = Field(default=30, gt=0)
    include_runtime: bool = False

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, value):
        unknown = [m for m in value if m not in METHODS]
        if unknown:
            raise ValueError(f"Unknown methods {unknown}; use {sorted(METHODS)}")
        return value

    def policy_for(self, agents: int) -> str:
        if isinstance(self.policies, str):
            return self.policies
        return self.policies.get(agents, "honest")


class CellResult(BaseModel):
    agents: int
    difficulty: str
    method: str
    domain: str
    size: int = 0
    runs: int = 0
    errors: Dict[str, float] = Field(default_factory=dict)
    rmse: Optional[float] = None
    ticks: Optional[float] = None
    valid_rate: Optional[float] = None
    runtime_seconds: Optional[float] = None
    error: Optional[str] = None


class MatrixReport(BaseModel):
    cells: List[CellResult] = Field(default_factory=list)
    table: str = ""


def load_matrix_config(path: Union[str, Path]) -> MatrixConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid matrix config {path}: {e}")
    try:
        return MatrixConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid matrix config {path}: {e}")


def derive_seed(master: int, *parts: Any) -> int:
    """
    Seed for one run of one cell. The method is left out so that mas_only
    and mas_dig see the same instances.
    """
    text = ":".join(str(p) for p in (master,) + parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:4], "big")


def run_cell(config: MatrixConfig, agents: int, difficulty: str, method: str) -> CellResult:
    cell = CellResult(agents=agents, difficulty=difficulty, method=method, domain=config.domain)
    try:
        domain = InputValidator.validate_task_domain(config.domain)
        cell.domain = domain
        size = size_for(domain, difficulty)
        names = agent_names(agents)
        specs = InputValidator.parse_policies(config.policy_for(agents), names)
    except Exception as e:
        cell.error = str(e)
        return cell

    total = max(config.runs.errors, config.runs.valid)
    cell.size, cell.runs = size, total
    per_class: Dict[str, List[int]] = {c.value: [] for c in CLASS_ORDER}
    rmses: List[float] = []
    ticks: List[int] = []
    runtimes: List[float] = []
    valid = 0

    try:
        for i in range(total):
            seed = derive_seed(config.seed, domain, agents, difficulty, i)
            task = generate_task(domain, size, seed)
            run_config = RunConfig(
                agents=specs,
                initial_recipients=names[:1],
                seed=seed,
                healing=METHODS[method],
                thresholds=config.thresholds,
                max_ticks=config.max_ticks,
                idle_limit=config.idle_limit,
            )
            started = time.monotonic()
            result = run_to_completion(init_run(run_config, task.payload))
            elapsed = time.monotonic() - started
            outcome = evaluate(result.final_event, task)

            if i < config.runs.valid and outcome["valid_output"]:
                valid += 1
            if i < config.runs.errors:
                for name, n in result.signal_counts().items():
                    per_class[name].append(n)
                rmses.append(outcome["rmse"] if outcome["rmse"] is not None else float("nan"))
                ticks.append(result.metrics.ticks)
                runtimes.append(elapsed)
    except Exception as e:
        logger.warning("cell_failed", agents=agents, difficulty=difficulty, method=method, error=str(e))
        cell.error = f"{type(e).__name__}: {e}"
        return cell

    cell.errors = {name: statistics.fmean(values) for name, values in per_class.items()}
    scored = [r for r in rmses if r == r]
    cell.rmse = statistics.fmean(scored) if scored else None
    cell.ticks = statistics.fmean(ticks)
    cell.valid_rate = valid / config.runs.valid
    if config.include_runtime:
        cell.runtime_seconds = round(statistics.fmean(runtimes), 4)
    return cell


def _fmt(value: Optional[float], digits: int = 2) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def format_table(cells: List[CellResult], include_runtime: bool = False) -> str:
    header = ["agents", "difficulty", "method"] + [c.value for c in CLASS_ORDER] + ["rmse", "ticks", "valid"]
    if include_runtime:
        header.append("runtime_s")
    rows = [header]
    for cell in cells:
        if cell.error:
            row = [str(cell.agents), cell.difficulty, cell.method] + ["-"] * (len(header) - 4) + [f"error: {cell.error}"]
            rows.append(row)
            continue
        row = [str(cell.agents), cell.difficulty, cell.method]
        row += [_fmt(cell.errors.get(c.value)) for c in CLASS_ORDER]
        row += [_fmt(cell.rmse), _fmt(cell.ticks, 1), _fmt(cell.valid_rate)]
        if include_runtime:
            row.append(_fmt(cell.runtime_seconds, 3))
        rows.append(row)

    widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(len(header))]
    lines = []
    for row in rows:
        padded = [cell.ljust(widths[i]) if i < 3 else cell.rjust(widths[i]) for i, cell in enumerate(row[: len(header)])]
        lines.append("  ".join(padded).rstrip())
    return "\n".join(lines) + "\n"


def result_line(cell: CellResult) -> str:
    data = cell.model_dump()
    return json.dumps({k: data[k] for k in RESULT_FIELDS}, separators=(",", ":"))


def run_matrix(config: MatrixConfig, out: Optional[Union[str, Path]] = None) -> MatrixReport:
    """Execute every cell; cell failures are recorded, never raised"""
    cells: List[CellResult] = []
    for agents in config.agents:
        for difficulty in config.difficulty:
            for method in config.methods:
                logger.info("cell_started", agents=agents, difficulty=difficulty, method=method)
                cells.append(run_cell(config, agents, difficulty, method))

    report = MatrixReport(cells=cells, table=format_table(cells, config.include_runtime))
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(result_line(c) + "\n" for c in cells), encoding="utf-8")
        logger.info("matrix_written", path=str(path), cells=len(cells))
    return report
