"""
Per-agent activation timeline as CSV
"""
import csv
import io
from pathlib import Path
from typing import Union

from graph.interaction_graph import InteractionGraph

TIMELINE_COLUMNS = ("agent", "activation", "start", "end", "inputs", "outputs", "class")


def export_timeline(graph: InteractionGraph) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIMELINE_COLUMNS)
    for act in sorted(graph.activations.values(), key=lambda a: (a.agent, a.start)):
        writer.writerow([
            act.agent,
            act.activation_id,
            act.start,
            "" if act.end is None else act.end,
            " ".join(act.inputs),
            " ".join(act.outputs),
            graph.classify_activation(act.activation_id).value,
        ])
    return buf.getvalue()


def save_timeline(graph: InteractionGraph, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(export_timeline(graph), encoding="utf-8")
    return path
