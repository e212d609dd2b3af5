"""
Diagnose Command Handler
"""
import time
from typing import Optional

from dig_runtime.exceptions import DigError
from dig_runtime.schemas import CommandResult
from dig_runtime.utils.logging import get_logger
from dig_runtime.utils.validation import InputValidator
from tracing.diagnose import diagnose

logger = get_logger(__name__)


def handle_diagnose(
    trace: str,
    mc_window: Optional[int] = None,
    oe_window: Optional[int] = None,
    dl_window: Optional[int] = None,
    er_max: Optional[int] = None,
) -> CommandResult:
    start_time = time.time()
    overrides = {
        "mc_window": mc_window,
        "oe_window": oe_window,
        "dl_window": dl_window,
        "er_max_reroutes": er_max,
    }
    overrides = {
        k: InputValidator.validate_positive_int(v, k) for k, v in overrides.items() if v is not None
    }
    try:
        report = diagnose(trace, **overrides)
    except (DigError, OSError) as e:
        logger.error("diagnose_failed", trace=trace, error=str(e))
        return CommandResult(success=False, error=f"{type(e).__name__}: {e}")
    return CommandResult(success=True, data=report.to_summary(), latency_ms=(time.time() - start_time) * 1000)
