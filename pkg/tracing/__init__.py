from tracing.diagnose import DiagnosisReport, diagnose
from tracing.records import MemorySink, TraceWriter, read_trace, write_trace
from tracing.replay import replay

__all__ = ["DiagnosisReport", "MemorySink", "TraceWriter", "diagnose", "read_trace", "replay", "write_trace"]
