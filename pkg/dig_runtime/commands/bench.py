"""
Bench Command Handler
"""
import time

from bench.matrix import load_matrix_config, run_matrix
from dig_runtime.schemas import CommandResult
from dig_runtime.utils.logging import get_logger

logger = get_logger(__name__)


def handle_bench(config: str, out: str) -> CommandResult:
    """ConfigError from a bad matrix file propagates as a usage error"""
    start_time = time.time()
    matrix = load_matrix_config(config)
    report = run_matrix(matrix, out=out)
    failed = [c for c in report.cells if c.error]
    return CommandResult(
        success=not failed,
        text=report.table,
        data={"cells": len(report.cells), "failed": len(failed), "out": out},
        error=f"{len(failed)} cell(s) failed" if failed else None,
        latency_ms=(time.time() - start_time) * 1000,
    )
