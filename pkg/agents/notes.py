"""
Structured healing notes

Notes are single lines of space-separated key=value pairs, led by the
note kind, e.g.

    note=unresolved signal=ET events=e4,e7

List values are comma separated. Agents parse them to react to healing.
"""
from typing import Dict, Iterable, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

UNRESOLVED = "unresolved"
EXHAUSTED = "exhausted"
ORPHANED = "orphaned"
STALLED = "stalled"
REROUTED = "rerouted"
LINEAGE = "lineage"
OVERLAP = "overlap"


class Note(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str
    attrs: Dict[str, str] = Field(default_factory=dict)

    def values(self, key: str) -> List[str]:
        raw = self.attrs.get(key, "")
        return [v for v in raw.split(",") if v]


def _render(value) -> str:
    if isinstance(value, (list, tuple, set, frozenset)):
        return ",".join(str(v) for v in value)
    return str(value).replace(" ", "_")


def format_note(kind: str, **fields) -> str:
    parts = [f"note={kind}"]
    parts.extend(f"{key}={_render(value)}" for key, value in fields.items())
    return " ".join(parts)


def parse_note(text: str) -> Optional[Note]:
    pairs: Dict[str, str] = {}
    for token in text.split():
        if "=" not in token:
            continue
        key, value = token.split("=", 1)
        pairs[key] = value
    kind = pairs.pop("note", None)
    if kind is None:
        return None
    return Note(kind=kind, attrs=pairs)


def parse_notes(notes: Iterable[str]) -> List[Note]:
    return [n for n in (parse_note(t) for t in notes) if n is not None]


def note_kinds(notes: Iterable[str]) -> Tuple[str, ...]:
    return tuple(n.kind for n in parse_notes(notes))
