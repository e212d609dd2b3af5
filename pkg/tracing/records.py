"""
Trace persistence

JSONL, one record per line, UTF-8. Field order is fixed: `t`, `kind`,
`data`; inside `data` keys appear in the order the scheduler builds them.
Payload bodies never enter the trace; they are referenced by sha256 digest
and optionally stored as sidecar blobs named `<digest>.bin`.
"""
import json
from pathlib import Path
from typing import IO, Iterable, List, Optional, Union

from pydantic import ValidationError

from dig_runtime.exceptions import TraceFormatError
from dig_runtime.schemas import TraceRecord
from dig_runtime.utils.logging import get_logger

logger = get_logger(__name__)


def encode_record(record: TraceRecord) -> str:
    return json.dumps(
        {"t": record.t, "kind": record.kind.value, "data": record.data},
        ensure_ascii=False,
        separators=(",", ":"),
    )


def decode_record(line: str, line_no: Optional[int] = None) -> TraceRecord:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"invalid JSON ({e.msg})", line_no)
    if not isinstance(raw, dict):
        raise TraceFormatError("record must be a JSON object", line_no)
    try:
        return TraceRecord.model_validate(raw)
    except ValidationError as e:
        raise TraceFormatError(f"invalid record: {e.errors()[0]['msg']}", line_no)


class MemorySink:
    """In-memory trace sink"""

    def __init__(self):
        self.records: List[TraceRecord] = []

    def write(self, record: TraceRecord, body: Optional[bytes] = None) -> None:
        self.records.append(record)

    def close(self) -> None:
        pass

    def lines(self) -> List[str]:
        return [encode_record(r) for r in self.records]


class TraceWriter:
    """Single-writer JSONL trace file with optional sidecar blob directory"""

    def __init__(self, path: Union[str, Path], blob_dir: Optional[Union[str, Path]] = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh: IO[str] = self.path.open("w", encoding="utf-8")
        self._blob_dir = Path(blob_dir) if blob_dir else None
        if self._blob_dir:
            self._blob_dir.mkdir(parents=True, exist_ok=True)
        self.count = 0

    def write(self, record: TraceRecord, body: Optional[bytes] = None) -> None:
        self._fh.write(encode_record(record) + "\n")
        self._fh.flush()
        self.count += 1
        if body is not None and self._blob_dir is not None:
            holder = record.data.get("root", record.data)
            digest = holder.get("payload", {}).get("body_digest")
            if digest:
                blob = self._blob_dir / f"{digest}.bin"
                if not blob.exists():
                    blob.write_bytes(body)

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()
            logger.info("trace_closed", path=str(self.path), records=self.count)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


def write_trace(records: Iterable[TraceRecord], path: Union[str, Path]) -> Path:
    with TraceWriter(path) as writer:
        for record in records:
            writer.write(record)
    return Path(path)


def read_trace(path: Union[str, Path]) -> List[TraceRecord]:
    """Read a trace, rejecting malformed lines and out-of-order ticks"""
    records: List[TraceRecord] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if not line.endswith("\n"):
                # last line without newline means the writer was cut off
                try:
                    record = decode_record(line, line_no)
                except TraceFormatError:
                    raise TraceFormatError("truncated record", line_no)
            else:
                record = decode_record(line, line_no)
            if records and record.t <= records[-1].t:
                raise TraceFormatError(
                    f"tick {record.t} does not follow {records[-1].t}", line_no
                )
            records.append(record)
    logger.debug("trace_read", path=str(path), records=len(records))
    return records
