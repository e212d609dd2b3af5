"""
DOT export
Activations are circles, events are boxes. Non-productive delivery edges
are dashed; the clean view drops them, leaving the post-rewrite picture.
"""
from pathlib import Path
from typing import List, Union

from dig_runtime.schemas import Attribution
from graph.interaction_graph import GENERATION, InteractionGraph


def _quote(text: str) -> str:
    # labels carry DOT's own \n escapes, so backslashes pass through
    return '"' + text.replace('"', '\\"') + '"'


def _event_label(event) -> str:
    parts = [event.event_id, event.kind.value]
    if event.coverage:
        parts.append(" ".join(f"[{s},{e})" for s, e in event.coverage))
    if event.final:
        parts.append("final")
    if event.notes:
        parts.append(f"notes={event.notes}")
    return "\\n".join(parts)


def export_dot(graph: InteractionGraph, clean: bool = False) -> str:
    lines: List[str] = [
        "digraph DIG {",
        "rankdir=LR;",
        "node [fontsize=10];",
    ]

    for act in sorted(graph.activations.values(), key=lambda a: (a.start, a.activation_id)):
        end = "-" if act.end is None else act.end
        label = f"{act.activation_id}\\n{act.agent}\\n[{act.start},{end}]"
        lines.append(f"{_quote(act.activation_id)} [label={_quote(label)}, shape=circle];")

    for event in sorted(graph.events.values(), key=lambda e: (e.generated_at, e.event_id)):
        style = ', style="filled", fillcolor="lightgray"' if event.system or event.final else ""
        lines.append(f"{_quote(event.event_id)} [label={_quote(_event_label(event))}, shape=box{style}];")

    for edge in graph.edge_list():
        src, dst = _quote(edge.src), _quote(edge.dst)
        if edge.kind == GENERATION:
            lines.append(f"{src} -> {dst};")
            continue
        if clean and edge.attribution == Attribution.NON_PRODUCTIVE:
            continue
        attrs = [f"label={_quote(edge.action.value)}"]
        if edge.attribution == Attribution.NON_PRODUCTIVE:
            attrs.append("style=dashed")
        elif edge.attribution == Attribution.PENDING:
            attrs.append("style=dotted")
        lines.append(f"{src} -> {dst} [{', '.join(attrs)}];")

    lines.append("}")
    return "\n".join(lines) + "\n"


def save_dot(graph: InteractionGraph, path: Union[str, Path], clean: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(export_dot(graph, clean=clean), encoding="utf-8")
    return path
