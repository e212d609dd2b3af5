"""
Core operations over the domain vocabulary: staged delivery, buffer
insertion, the logical clock and coverage arithmetic.
"""
import threading
from typing import Iterable, List, Sequence, Set, Tuple

from dig_runtime.exceptions import DuplicateDeliveryError
from dig_runtime.schemas import Buffer, BufferEntry, CoverageRange, DeliveryPolicy


def evaluate_policy(policy: DeliveryPolicy, elapsed: int) -> Tuple[Set[str], DeliveryPolicy]:
    """Return recipients of every wave due at `elapsed` and the unexpired tail"""
    if elapsed < 0:
        raise ValueError("elapsed must be non-negative")
    due: Set[str] = set()
    remaining = []
    for wave in policy.schedule:
        if wave.delay <= elapsed:
            due.update(wave.recipients)
        else:
            remaining.append(wave)
    return due, DeliveryPolicy(schedule=tuple(remaining))


def next_due(policy: DeliveryPolicy) -> int:
    """Smallest delay still scheduled; -1 for an exhausted policy"""
    if policy.exhausted:
        return -1
    return min(w.delay for w in policy.schedule)


def buffer_insert(buffer: Buffer, event_id: str, at: int) -> Buffer:
    if event_id in buffer:
        raise DuplicateDeliveryError(event_id)
    entry = BufferEntry(event_id=event_id, received_at=at)
    entries = sorted(buffer.entries + (entry,), key=BufferEntry.sort_key)
    return Buffer(entries=tuple(entries))


def next_tick(clock: int) -> int:
    return clock + 1


class LogicalClock:
    """The run's single clock authority"""

    def __init__(self, start: int = 0):
        self._now = start
        self._lock = threading.Lock()

    @property
    def now(self) -> int:
        return self._now

    def advance(self) -> int:
        with self._lock:
            self._now = next_tick(self._now)
            return self._now


# ---------------------------------------------------------------- coverage


def merge_ranges(ranges: Iterable[CoverageRange]) -> List[CoverageRange]:
    ordered = sorted(ranges, key=lambda r: (r.start, r.end))
    merged: List[Tuple[int, int]] = []
    for r in ordered:
        if merged and r.start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], r.end))
        else:
            merged.append((r.start, r.end))
    return [CoverageRange(start=s, end=e) for s, e in merged]


def covers(ranges: Iterable[CoverageRange], root: Sequence[CoverageRange]) -> bool:
    return merge_ranges(ranges) == merge_ranges(root)


def any_overlap(candidate: Iterable[CoverageRange], held: Iterable[CoverageRange]) -> bool:
    held = list(held)
    return any(c.overlaps(h) for c in candidate for h in held)


def split_range(rng: CoverageRange, parts: int) -> List[CoverageRange]:
    """Split into at most `parts` contiguous, disjoint, non-empty ranges"""
    size = rng.size
    bounds = [rng.start + (size * i) // parts for i in range(parts + 1)]
    return [
        CoverageRange(start=lo, end=hi)
        for lo, hi in zip(bounds, bounds[1:])
        if hi > lo
    ]
